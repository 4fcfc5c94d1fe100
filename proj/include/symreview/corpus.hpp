#pragma once

// Defect-detection datasets in the CodeXGLUE JSONL layout: one object per
// line with `func` (source text), `target` (0/1) and an optional `idx`.

#include <symreview/error.hpp>
#include <symreview/rng.hpp>

#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace symreview {

using ojson = nlohmann::ordered_json;

enum class Label { Clean, Buggy };

inline std::string_view to_string(Label label) {
  return label == Label::Buggy ? "buggy" : "clean";
}

inline Label opposite(Label label) {
  return label == Label::Buggy ? Label::Clean : Label::Buggy;
}

/// Standard: target 0 = clean, 1 = buggy. Inverted swaps the two for
/// datasets published with the opposite polarity.
enum class Polarity { Standard, Inverted };

inline Label label_from_target(int target, Polarity polarity = Polarity::Standard) {
  if (target != 0 && target != 1) {
    throw Error(ErrorKind::Validation, "target must be 0 or 1, got " + std::to_string(target));
  }
  const bool buggy = (target == 1) != (polarity == Polarity::Inverted);
  return buggy ? Label::Buggy : Label::Clean;
}

inline int target_from_label(Label label, Polarity polarity = Polarity::Standard) {
  const bool one = (label == Label::Buggy) != (polarity == Polarity::Inverted);
  return one ? 1 : 0;
}

struct CodeSample {
  std::int64_t id = 0;
  std::string source;
  Label label = Label::Clean;
  std::string language_tag = "python";
  // Set on records produced by oversampling; they share the id of the original.
  bool duplicate = false;
  // Unknown record fields, carried through a load/write round-trip untouched.
  ojson extra = ojson::object();

  bool operator==(const CodeSample& other) const {
    return id == other.id && source == other.source && label == other.label &&
           language_tag == other.language_tag && duplicate == other.duplicate &&
           extra == other.extra;
  }
};

struct DatasetStats {
  std::size_t total = 0;
  std::size_t clean_count = 0;
  std::size_t buggy_count = 0;
  double buggy_ratio = 0.0;
};

struct LoadOptions {
  std::optional<std::size_t> limit;
  Polarity polarity = Polarity::Standard;
  std::string language_tag = "python";
};

namespace detail {

inline bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' ||
                                                  c == '\f' || c == '\v'; });
}

}  // namespace detail

/// Reads JSONL records from a stream. `origin` names the source in messages.
inline std::vector<CodeSample> parse_dataset(std::istream& in, const LoadOptions& options = {},
                                             std::string_view origin = "<stream>") {
  std::vector<CodeSample> samples;
  std::unordered_set<std::int64_t> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t next_id = 0;
  const std::string where(origin);

  while (std::getline(in, line)) {
    ++line_no;
    if (options.limit && samples.size() >= *options.limit) break;
    if (detail::is_blank(line)) continue;

    ojson record;
    try {
      record = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": malformed JSON record: " + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError(where + ": record is not a JSON object", line_no);

    auto func = record.find("func");
    if (func == record.end() || !func->is_string()) {
      throw ParseError(where + ": missing string field 'func'", line_no);
    }
    auto target = record.find("target");
    if (target == record.end() || !target->is_number_integer()) {
      throw ParseError(where + ": missing integer field 'target'", line_no);
    }

    CodeSample sample;
    sample.source = func->get<std::string>();
    sample.language_tag = options.language_tag;
    try {
      sample.label = label_from_target(target->get<int>(), options.polarity);
    } catch (const Error& e) {
      throw Error(ErrorKind::Validation,
                  where + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (detail::is_blank(sample.source)) {
      throw Error(ErrorKind::Validation,
                  where + ": line " + std::to_string(line_no) + ": empty source text");
    }

    auto dup = record.find("duplicate");
    sample.duplicate = dup != record.end() && dup->is_boolean() && dup->get<bool>();

    auto idx = record.find("idx");
    if (idx != record.end()) {
      if (!idx->is_number_integer()) throw ParseError(where + ": field 'idx' is not an integer", line_no);
      sample.id = idx->get<std::int64_t>();
    } else {
      sample.id = next_id;
    }
    next_id = sample.id + 1;

    if (!sample.duplicate && !seen_ids.insert(sample.id).second) {
      throw Error(ErrorKind::Validation, where + ": line " + std::to_string(line_no) +
                                             ": duplicate idx " + std::to_string(sample.id));
    }

    for (auto it = record.begin(); it != record.end(); ++it) {
      const auto& key = it.key();
      if (key == "func" || key == "target" || key == "idx" || key == "duplicate") continue;
      sample.extra[key] = it.value();
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

inline std::vector<CodeSample> load_dataset(const std::string& path, const LoadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read dataset '" + path + "'");
  return parse_dataset(in, options, path);
}

inline ojson to_record(const CodeSample& sample, Polarity polarity = Polarity::Standard) {
  ojson record = ojson::object();
  record["func"] = sample.source;
  record["target"] = target_from_label(sample.label, polarity);
  record["idx"] = sample.id;
  if (sample.duplicate) record["duplicate"] = true;
  for (auto it = sample.extra.begin(); it != sample.extra.end(); ++it) record[it.key()] = it.value();
  return record;
}

inline void write_dataset(std::ostream& out, const std::vector<CodeSample>& samples,
                          Polarity polarity = Polarity::Standard) {
  for (const auto& sample : samples) out << to_record(sample, polarity).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<CodeSample>& samples,
                         Polarity polarity = Polarity::Standard) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write dataset '" + path + "'");
  write_dataset(out, samples, polarity);
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

inline DatasetStats stats(const std::vector<CodeSample>& samples) {
  DatasetStats result;
  result.total = samples.size();
  result.buggy_count = static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == Label::Buggy; }));
  result.clean_count = result.total - result.buggy_count;
  result.buggy_ratio =
      result.total ? static_cast<double>(result.buggy_count) / static_cast<double>(result.total) : 0.0;
  return result;
}

/// Random oversampling to exact class parity. Originals are kept in order and
/// minority-class copies (drawn uniformly with replacement) are appended.
inline std::vector<CodeSample> oversample(const std::vector<CodeSample>& samples, std::uint64_t seed) {
  std::vector<std::size_t> clean, buggy;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label == Label::Buggy ? buggy : clean).push_back(i);
  }
  if (clean.empty() || buggy.empty()) {
    throw Error(ErrorKind::CannotBalance, "oversampling needs both classes (clean=" +
                                              std::to_string(clean.size()) +
                                              ", buggy=" + std::to_string(buggy.size()) + ")");
  }

  std::vector<CodeSample> out = samples;
  const auto& minority = clean.size() < buggy.size() ? clean : buggy;
  const std::size_t deficit = std::max(clean.size(), buggy.size()) - minority.size();
  if (deficit == 0) return out;

  SeededRng rng(seed);
  out.reserve(samples.size() + deficit);
  for (std::size_t n = 0; n < deficit; ++n) {
    CodeSample copy = samples[minority[rng.below(minority.size())]];
    copy.duplicate = true;
    spdlog::debug("oversample: copy of sample {} ({})", copy.id, to_string(copy.label));
    out.push_back(std::move(copy));
  }
  return out;
}

struct SplitResult {
  std::vector<CodeSample> train;
  std::vector<CodeSample> eval;
};

inline SplitResult split(const std::vector<CodeSample>& samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::Validation, "train fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(samples.size())));
  SplitResult result;
  result.train.reserve(n_train);
  result.eval.reserve(samples.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? result.train : result.eval).push_back(samples[order[i]]);
  }
  return result;
}

/// Hex SHA-256 of the canonical JSONL serialization. Used to refuse
/// comparisons between runs over different data.
inline std::string dataset_digest(const std::vector<CodeSample>& samples) {
  std::ostringstream canonical;
  write_dataset(canonical, samples);
  const std::string bytes = canonical.str();

  unsigned char hash[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), hash, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[hash[i] >> 4]);
    hex.push_back(kHex[hash[i] & 0x0F]);
  }
  return hex;
}

}  // namespace symreview
