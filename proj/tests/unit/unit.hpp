#pragma once

#include "../support.hpp"

#include <gtest/gtest.h>

#define EXPECT_ERROR_KIND(statement, expected_kind)                                            \
  do {                                                                                          \
    try {                                                                                       \
      statement;                                                                                \
      ADD_FAILURE() << "expected " << ::symreview::to_string(expected_kind) << " error";      \
    } catch (const ::symreview::Error& error_) {                                                \
      EXPECT_EQ(error_.kind(), expected_kind) << error_.what();                                 \
    }                                                                                           \
  } while (0)
namespace support = symreview::testing;
