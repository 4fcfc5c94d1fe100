#pragma once

#include <symreview/analyzer.hpp>
#include <symreview/backend.hpp>
#include <symreview/corpus.hpp>
#include <symreview/error.hpp>
#include <symreview/evalharness.hpp>
#include <symreview/knowledge_map.hpp>
#include <symreview/promptkit.hpp>
#include <symreview/reference_tables.hpp>
#include <symreview/rng.hpp>
#include <symreview/syntax.hpp>
