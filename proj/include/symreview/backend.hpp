#pragma once

// Classification backends. One canonical wire protocol:
//
//   POST <endpoint>/v1/classify
//   {"prompt": "<text>", "max_new_tokens": 8, "temperature": 0.0}
//   -> 200 {"completion": "<text>"}
//
// plus deterministic in-process mocks for offline runs.

#include <symreview/analyzer.hpp>
#include <symreview/corpus.hpp>
#include <symreview/error.hpp>
#include <symreview/promptkit.hpp>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace symreview {

enum class ParseMode { Exact, Keyword, Fallback };

inline std::string_view to_string(ParseMode mode) {
  switch (mode) {
    case ParseMode::Exact: return "Exact";
    case ParseMode::Keyword: return "Keyword";
    case ParseMode::Fallback: return "Fallback";
  }
  return "?";
}

inline ParseMode parse_mode_from_string(std::string_view text) {
  for (auto m : {ParseMode::Exact, ParseMode::Keyword, ParseMode::Fallback})
    if (to_string(m) == text) return m;
  throw Error(ErrorKind::Validation, "unknown parse mode '" + std::string(text) + "'");
}

struct ParsedLabel {
  std::optional<Label> label;  // empty on failure
  ParseMode mode = ParseMode::Fallback;
};

/// Maps a raw completion to a label. Exact forms (after trimming and
/// lowercasing): "buggy", "clean", "1" (buggy), "0" (clean). Otherwise a
/// keyword scan over whole words: buggy/defective vs clean/correct; exactly one
/// side must occur. Anything else is a Fallback failure.
inline ParsedLabel parse_verdict(std::string_view raw) {
  std::string text;
  text.reserve(raw.size());
  for (char c : raw) text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto first = text.find_first_not_of(" \t\r\n\f\v");
  const auto last = text.find_last_not_of(" \t\r\n\f\v");
  const std::string trimmed = first == std::string::npos ? std::string() : text.substr(first, last - first + 1);

  if (trimmed == "buggy" || trimmed == "1") return {Label::Buggy, ParseMode::Exact};
  if (trimmed == "clean" || trimmed == "0") return {Label::Clean, ParseMode::Exact};

  bool saw_buggy = false;
  bool saw_clean = false;
  std::string word;
  auto flush = [&] {
    if (word == "buggy" || word == "defective") saw_buggy = true;
    if (word == "clean" || word == "correct") saw_clean = true;
    word.clear();
  };
  for (char c : trimmed) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') word.push_back(c);
    else flush();
  }
  flush();
  if (saw_buggy != saw_clean) return {saw_buggy ? Label::Buggy : Label::Clean, ParseMode::Keyword};
  return {std::nullopt, ParseMode::Fallback};
}

struct Verdict {
  std::optional<Label> label;  // empty when parse_mode is Fallback
  std::string raw_output;
  double latency_ms = 0.0;
  ParseMode parse_mode = ParseMode::Fallback;

  Label require_label() const {
    if (!label) throw Error(ErrorKind::VerdictParse, "cannot read a verdict from completion '" + raw_output + "'");
    return *label;
  }
};

/// Descriptive metadata about how a served model was fine-tuned. Attached to
/// run records; nothing here is executed.
struct FineTuneProfile {
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  std::size_t max_input_tokens = 256;
  bool mixed_precision = true;
  bool oversampled = true;
  std::string optimizer_name = "AdamW";
  std::string base_model_name;

  bool operator==(const FineTuneProfile&) const = default;
};

inline ojson profile_to_json(const FineTuneProfile& p) {
  ojson j = ojson::object();
  j["learning_rate"] = p.learning_rate;
  j["weight_decay"] = p.weight_decay;
  j["max_input_tokens"] = p.max_input_tokens;
  j["mixed_precision"] = p.mixed_precision;
  j["oversampled"] = p.oversampled;
  j["optimizer_name"] = p.optimizer_name;
  j["base_model_name"] = p.base_model_name;
  return j;
}

inline FineTuneProfile profile_from_json(const ojson& j) {
  FineTuneProfile p;
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.weight_decay = j.value("weight_decay", p.weight_decay);
  p.max_input_tokens = j.value("max_input_tokens", p.max_input_tokens);
  p.mixed_precision = j.value("mixed_precision", p.mixed_precision);
  p.oversampled = j.value("oversampled", p.oversampled);
  p.optimizer_name = j.value("optimizer_name", p.optimizer_name);
  p.base_model_name = j.value("base_model_name", p.base_model_name);
  return p;
}

inline constexpr std::string_view kDefaultTokenEnv = "REVIEW_BACKEND_TOKEN";

struct BackendConfig {
  std::string endpoint;
  // Name of the environment variable holding the bearer token; the token
  // itself never appears in configuration or run records.
  std::string token_env = std::string(kDefaultTokenEnv);
  int timeout_ms = 30000;
  int max_retries = 3;
  int max_parallel_requests = 4;
  int backoff_initial_ms = 200;
  int backoff_max_ms = 5000;

  void validate() const {
    if (timeout_ms <= 0) throw Error(ErrorKind::Validation, "timeout_ms must be positive");
    if (max_parallel_requests < 1) throw Error(ErrorKind::Validation, "max_parallel_requests must be at least 1");
    if (max_retries < 0) throw Error(ErrorKind::Validation, "max_retries must be non-negative");
    if (backoff_initial_ms < 0 || backoff_max_ms < backoff_initial_ms) {
      throw Error(ErrorKind::Validation, "backoff bounds must satisfy 0 <= initial <= max");
    }
  }
};

/// Delay before retry i (0-based): initial * 2^i, capped at backoff_max_ms.
inline std::vector<std::chrono::milliseconds> backoff_schedule(const BackendConfig& config) {
  std::vector<std::chrono::milliseconds> delays;
  long long delay = config.backoff_initial_ms;
  for (int i = 0; i < config.max_retries; ++i) {
    delays.emplace_back(std::min<long long>(delay, config.backoff_max_ms));
    delay = std::min<long long>(delay * 2, config.backoff_max_ms);
  }
  return delays;
}

/// Request body in the canonical key order.
inline std::string classify_request_body(std::string_view prompt) {
  return "{\"prompt\": " + nlohmann::json(std::string(prompt)).dump() +
         ", \"max_new_tokens\": 8, \"temperature\": 0.0}";
}

/// What a backend may know about the sample behind a prompt. Real endpoints
/// only see the prompt; mocks use the gold label or the source.
struct SampleContext {
  std::int64_t id = 0;
  std::string_view source;
  std::optional<Label> gold;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual Verdict classify(const PromptBundle& bundle, const SampleContext& sample) = 0;
  virtual std::string descriptor() const = 0;
  virtual std::size_t max_parallel() const = 0;
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // base path + /v1/classify
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::Validation, "endpoint must be an http:// URL");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw Error(ErrorKind::Validation, "unsupported endpoint scheme '" + scheme + "' (only http is built in)");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  std::string base = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  e.path = base + "/v1/classify";
  if (e.origin.size() <= scheme_end + 3) throw Error(ErrorKind::Validation, "endpoint has no host");
  return e;
}

}  // namespace detail

class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(BackendConfig config, Sleeper sleeper = {})
      : config_(std::move(config)), endpoint_(detail::split_endpoint(config_.endpoint)), sleeper_(std::move(sleeper)) {
    config_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  Verdict classify(const PromptBundle& bundle, const SampleContext&) override {
    const std::string body = classify_request_body(bundle.text);
    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const auto delays = backoff_schedule(config_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        spdlog::debug("classify retry {}/{} after {}", attempt, config_.max_retries, last_error);
        sleeper_(delays[static_cast<std::size_t>(attempt - 1)]);
      }
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);

      const auto started = std::chrono::steady_clock::now();
      auto result = client.Post(endpoint_.path, headers, body, "application/json");
      const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started);
      if (!result) {
        last_error = httplib::to_string(result.error());
        continue;
      }
      if (result->status < 200 || result->status >= 300) {
        throw ProtocolError(result->status, "classification endpoint rejected the request");
      }
      std::string completion;
      try {
        const auto reply = nlohmann::json::parse(result->body);
        completion = reply.at("completion").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(result->status, std::string("malformed response body: ") + e.what());
      }
      const auto parsed = parse_verdict(completion);
      return Verdict{parsed.label, std::move(completion), elapsed.count(), parsed.mode};
    }
    throw Error(ErrorKind::BackendUnavailable, config_.endpoint + " unreachable after " +
                                                   std::to_string(config_.max_retries + 1) + " attempts (" +
                                                   last_error + ")");
  }

  std::string descriptor() const override { return config_.endpoint; }
  std::size_t max_parallel() const override { return static_cast<std::size_t>(config_.max_parallel_requests); }
  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
  detail::Endpoint endpoint_;
  Sleeper sleeper_;
};

enum class MockMode { EchoGold, InvertGold, AlwaysBuggy, FindingsOracle, Canned };

inline std::string_view to_string(MockMode mode) {
  switch (mode) {
    case MockMode::EchoGold: return "echo-gold";
    case MockMode::InvertGold: return "invert-gold";
    case MockMode::AlwaysBuggy: return "always-buggy";
    case MockMode::FindingsOracle: return "findings-oracle";
    case MockMode::Canned: return "canned";
  }
  return "?";
}

inline MockMode mock_mode_from_string(std::string_view text) {
  for (auto m : {MockMode::EchoGold, MockMode::InvertGold, MockMode::AlwaysBuggy, MockMode::FindingsOracle,
                 MockMode::Canned}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorKind::Validation, "unknown mock mode '" + std::string(text) + "'");
}

/// Canned completions: JSON object mapping sample id (string) to completion.
inline std::map<std::string, std::string> load_canned(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read canned completions '" + path + "'");
  std::map<std::string, std::string> out;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (!doc.is_object()) throw Error(ErrorKind::Validation, path + ": canned file must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = it.value().get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return out;
}

/// Deterministic stand-in backend. Completions go through parse_verdict like
/// real ones.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockMode mode, KnowledgeMap map = default_map()) : mode_(mode), map_(std::move(map)) {
    if (mode == MockMode::Canned) throw Error(ErrorKind::Validation, "canned mock needs completions");
  }

  explicit MockBackend(std::map<std::string, std::string> canned, std::string origin = "canned")
      : mode_(MockMode::Canned), canned_(std::move(canned)), origin_(std::move(origin)) {}

  static std::unique_ptr<MockBackend> from_file(const std::string& canned_path) {
    return std::make_unique<MockBackend>(load_canned(canned_path), "canned:" + canned_path);
  }

  Verdict classify(const PromptBundle&, const SampleContext& sample) override {
    const auto started = std::chrono::steady_clock::now();
    std::string completion = completion_for(sample);
    const auto parsed = parse_verdict(completion);
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started);
    return Verdict{parsed.label, std::move(completion), elapsed.count(), parsed.mode};
  }

  std::string descriptor() const override {
    return mode_ == MockMode::Canned ? "mock:" + origin_ : "mock:" + std::string(to_string(mode_));
  }
  std::size_t max_parallel() const override { return 8; }
  MockMode mode() const { return mode_; }

 private:
  std::string completion_for(const SampleContext& sample) const {
    auto gold = [&] {
      if (!sample.gold) {
        throw Error(ErrorKind::Validation,
                    std::string(to_string(mode_)) + " mock needs a gold label; review a labeled dataset sample");
      }
      return *sample.gold;
    };
    switch (mode_) {
      case MockMode::EchoGold: return std::string(to_string(gold()));
      case MockMode::InvertGold: return std::string(to_string(opposite(gold())));
      case MockMode::AlwaysBuggy: return "buggy";
      case MockMode::FindingsOracle: return has_defect(analyze(sample.source, map_), map_) ? "buggy" : "clean";
      case MockMode::Canned: {
        auto it = canned_.find(std::to_string(sample.id));
        if (it == canned_.end()) {
          throw Error(ErrorKind::Lookup, "no canned completion for sample " + std::to_string(sample.id));
        }
        return it->second;
      }
    }
    return {};
  }

  MockMode mode_;
  KnowledgeMap map_;
  std::map<std::string, std::string> canned_;
  std::string origin_;
};

}  // namespace symreview
