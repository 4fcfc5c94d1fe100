#pragma once

// Prompt assembly for the four review scenarios:
//
//   BaseOneShot      one labeled exemplar, no catalog
//   FewShot          k labeled exemplars, no catalog
//   FineTunedDirect  the bare target code only
//   Hybrid           catalog + k exemplars + (optionally) symbolic findings
//
// Output is byte-deterministic for equal inputs.

#include <symreview/analyzer.hpp>
#include <symreview/corpus.hpp>
#include <symreview/knowledge_map.hpp>
#include <symreview/rng.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace symreview {

enum class ScenarioKind { BaseOneShot, FewShot, FineTunedDirect, Hybrid };

inline std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::BaseOneShot: return "base";
    case ScenarioKind::FewShot: return "few-shot";
    case ScenarioKind::FineTunedDirect: return "fine-tuned";
    case ScenarioKind::Hybrid: return "hybrid";
  }
  return "?";
}

inline ScenarioKind scenario_from_string(std::string_view text) {
  for (auto kind : {ScenarioKind::BaseOneShot, ScenarioKind::FewShot, ScenarioKind::FineTunedDirect,
                    ScenarioKind::Hybrid}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorKind::Validation,
              "unknown scenario '" + std::string(text) + "' (expected base, few-shot, fine-tuned or hybrid)");
}

struct PromptBudget {
  std::size_t max_chars = 8000;
  std::size_t exemplar_max_chars = 1200;

  void validate() const {
    if (!(exemplar_max_chars > 0 && max_chars > exemplar_max_chars)) {
      throw Error(ErrorKind::Validation, "prompt budget requires max_chars > exemplar_max_chars > 0");
    }
  }

  bool operator==(const PromptBudget&) const = default;
};

inline constexpr std::size_t kDefaultShots = 4;

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Hybrid;
  std::size_t shots = kDefaultShots;
  bool include_catalog = true;
  bool include_findings = true;
  std::uint64_t seed = 0;
  PromptBudget budget;

  /// Canonical configuration for a scenario kind.
  static ScenarioConfig for_kind(ScenarioKind kind, std::uint64_t seed = 0) {
    ScenarioConfig config;
    config.kind = kind;
    config.seed = seed;
    switch (kind) {
      case ScenarioKind::BaseOneShot:
        config.shots = 1;
        config.include_catalog = false;
        config.include_findings = false;
        break;
      case ScenarioKind::FewShot:
        config.shots = kDefaultShots;
        config.include_catalog = false;
        config.include_findings = false;
        break;
      case ScenarioKind::FineTunedDirect:
        config.shots = 0;
        config.include_catalog = false;
        config.include_findings = false;
        break;
      case ScenarioKind::Hybrid:
        config.shots = kDefaultShots;
        config.include_catalog = true;
        config.include_findings = true;
        break;
    }
    return config;
  }

  void validate() const {
    budget.validate();
    switch (kind) {
      case ScenarioKind::BaseOneShot:
        if (shots != 1 || include_catalog || include_findings) {
          throw Error(ErrorKind::Validation, "base scenario requires exactly 1 shot and no catalog or findings");
        }
        break;
      case ScenarioKind::FineTunedDirect:
        if (shots != 0 || include_catalog || include_findings) {
          throw Error(ErrorKind::Validation, "fine-tuned scenario sends bare code: 0 shots, no catalog or findings");
        }
        break;
      case ScenarioKind::Hybrid:
        if (!include_catalog) throw Error(ErrorKind::Validation, "hybrid scenario requires the catalog");
        break;
      case ScenarioKind::FewShot:
        if (shots == 0) throw Error(ErrorKind::Validation, "few-shot scenario requires at least 1 shot");
        break;
    }
  }

  bool operator==(const ScenarioConfig&) const = default;
};

struct PromptBundle {
  ScenarioConfig scenario;
  std::int64_t sample_id = 0;
  std::string text;
  std::vector<std::int64_t> exemplar_ids;
};

/// Label-balanced exemplars: ceil(k/2) buggy and floor(k/2) clean, drawn
/// without replacement from the pool (first occurrence per id), never the
/// excluded id. Returned interleaved buggy, clean, buggy, ...
inline std::vector<CodeSample> select_exemplars(const std::vector<CodeSample>& pool, std::size_t k,
                                                std::uint64_t seed, std::optional<std::int64_t> exclude) {
  std::vector<const CodeSample*> buggy, clean;
  std::unordered_set<std::int64_t> seen;
  for (const auto& s : pool) {
    if (exclude && s.id == *exclude) continue;
    if (!seen.insert(s.id).second) continue;
    (s.label == Label::Buggy ? buggy : clean).push_back(&s);
  }
  const std::size_t want_buggy = (k + 1) / 2;
  const std::size_t want_clean = k / 2;
  if (buggy.size() < want_buggy || clean.size() < want_clean) {
    throw Error(ErrorKind::Selection, "exemplar pool too small: need " + std::to_string(want_buggy) + " buggy and " +
                                          std::to_string(want_clean) + " clean, have " +
                                          std::to_string(buggy.size()) + " and " + std::to_string(clean.size()));
  }

  SeededRng rng(seed);
  auto draw = [&](std::vector<const CodeSample*>& from, std::size_t count) {
    // partial Fisher-Yates
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(from.size() - i));
      std::swap(from[i], from[j]);
    }
    from.resize(count);
  };
  draw(buggy, want_buggy);
  draw(clean, want_clean);

  std::vector<CodeSample> out;
  out.reserve(k);
  for (std::size_t i = 0; i < want_buggy; ++i) {
    out.push_back(*buggy[i]);
    if (i < want_clean) out.push_back(*clean[i]);
  }
  return out;
}

inline constexpr std::string_view kTaskInstruction =
    "You are reviewing code for defects. Classify the target code as buggy or clean. "
    "Answer with exactly one word: buggy or clean.";
inline constexpr std::string_view kTruncationMarker = "\n# ... [truncated]";
inline constexpr std::string_view kAnswerCue = "Label:";

namespace detail {

inline std::string fence_code(std::string_view code, std::string_view language) {
  std::size_t longest = 0;
  std::size_t run = 0;
  for (char c : code) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  const std::string fence(std::max<std::size_t>(3, longest + 1), '`');
  std::string out = fence + std::string(language) + "\n" + std::string(code);
  if (out.back() != '\n') out += '\n';
  out += fence + "\n";
  return out;
}

inline std::string truncate_exemplar(std::string_view source, std::size_t limit) {
  if (source.size() <= limit) return std::string(source);
  std::size_t keep = limit > kTruncationMarker.size() ? limit - kTruncationMarker.size() : 0;
  while (keep > 0 && (static_cast<unsigned char>(source[keep]) & 0xC0) == 0x80) --keep;
  return std::string(source.substr(0, keep)) + std::string(kTruncationMarker);
}

inline std::string render_findings(const std::vector<Finding>& findings) {
  std::string out = "Symbolic analysis findings for the target code:\n";
  if (findings.empty()) return out + "- none\n";
  for (const auto& f : findings) {
    out += "- " + f.rule_id + " line " + std::to_string(f.line) + ": " + f.message + "\n";
  }
  return out;
}

}  // namespace detail

/// Assembles the prompt. Layout: instruction, catalog, exemplars, findings,
/// target, answer cue. Over-budget prompts lose exemplars from the end; the
/// catalog, findings and target are never dropped.
inline PromptBundle build_prompt(const CodeSample& sample, const ScenarioConfig& scenario,
                                 const std::vector<CodeSample>& pool, const KnowledgeMap& map,
                                 const std::optional<std::vector<Finding>>& findings = std::nullopt) {
  scenario.validate();
  if (findings.has_value() != scenario.include_findings) {
    throw Error(ErrorKind::Validation, scenario.include_findings
                                           ? "scenario includes findings but none were provided"
                                           : "findings provided for a scenario that excludes them");
  }

  PromptBundle bundle;
  bundle.scenario = scenario;
  bundle.sample_id = sample.id;

  const std::string target = detail::fence_code(sample.source, sample.language_tag);
  if (scenario.kind == ScenarioKind::FineTunedDirect) {
    bundle.text = target + std::string(kAnswerCue);
    if (bundle.text.size() > scenario.budget.max_chars) {
      throw Error(ErrorKind::Budget, "target code alone exceeds the prompt budget");
    }
    return bundle;
  }

  const std::string head = std::string(kTaskInstruction) + "\n\n" +
                           (scenario.include_catalog ? render_context(map) + "\n" : std::string());
  const std::string tail = (findings ? detail::render_findings(*findings) + "\n" : std::string()) +
                           "Target code:\n" + target + std::string(kAnswerCue);
  if (head.size() + tail.size() > scenario.budget.max_chars) {
    throw Error(ErrorKind::Budget, "target code with required context exceeds the prompt budget (" +
                                       std::to_string(head.size() + tail.size()) + " > " +
                                       std::to_string(scenario.budget.max_chars) + " chars)");
  }

  const auto exemplars = scenario.shots > 0 ? select_exemplars(pool, scenario.shots, scenario.seed, sample.id)
                                            : std::vector<CodeSample>{};
  std::vector<std::string> blocks;
  blocks.reserve(exemplars.size());
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& ex = exemplars[i];
    blocks.push_back("Example " + std::to_string(i + 1) + ":\n" +
                     detail::fence_code(detail::truncate_exemplar(ex.source, scenario.budget.exemplar_max_chars),
                                        ex.language_tag) +
                     std::string(kAnswerCue) + " " + std::string(to_string(ex.label)) + "\n\n");
  }

  std::size_t total = head.size() + tail.size();
  for (const auto& b : blocks) total += b.size();
  std::size_t kept = blocks.size();
  while (kept > 0 && total > scenario.budget.max_chars) total -= blocks[--kept].size();

  bundle.text = head;
  for (std::size_t i = 0; i < kept; ++i) {
    bundle.text += blocks[i];
    bundle.exemplar_ids.push_back(exemplars[i].id);
  }
  bundle.text += tail;
  return bundle;
}

inline ojson scenario_to_json(const ScenarioConfig& s) {
  ojson j = ojson::object();
  j["kind"] = std::string(to_string(s.kind));
  j["shots"] = s.shots;
  j["include_catalog"] = s.include_catalog;
  j["include_findings"] = s.include_findings;
  j["seed"] = s.seed;
  j["budget"] = {{"max_chars", s.budget.max_chars}, {"exemplar_max_chars", s.budget.exemplar_max_chars}};
  return j;
}

inline ScenarioConfig scenario_from_json(const ojson& j) {
  try {
    ScenarioConfig s = ScenarioConfig::for_kind(scenario_from_string(j.at("kind").get<std::string>()));
    s.shots = j.value("shots", s.shots);
    s.include_catalog = j.value("include_catalog", s.include_catalog);
    s.include_findings = j.value("include_findings", s.include_findings);
    s.seed = j.value("seed", s.seed);
    if (j.contains("budget")) {
      s.budget.max_chars = j["budget"].value("max_chars", s.budget.max_chars);
      s.budget.exemplar_max_chars = j["budget"].value("exemplar_max_chars", s.budget.exemplar_max_chars);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed scenario: ") + e.what());
  }
}

/// JSON sidecar written next to a previewed prompt.
inline ojson bundle_sidecar(const PromptBundle& bundle) {
  ojson j = ojson::object();
  j["sample_id"] = bundle.sample_id;
  j["exemplar_ids"] = bundle.exemplar_ids;
  j["scenario"] = scenario_to_json(bundle.scenario);
  j["chars"] = bundle.text.size();
  return j;
}

}  // namespace symreview
