#pragma once

// Scenario runs, metrics and comparison tables. Buggy is the positive class
// throughout; zero-denominator precision/recall are defined as 0.

#include <symreview/analyzer.hpp>
#include <symreview/backend.hpp>
#include <symreview/corpus.hpp>
#include <symreview/error.hpp>
#include <symreview/promptkit.hpp>
#include <symreview/rng.hpp>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace symreview {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }

  /// Scores one sample; a missing prediction counts as wrong.
  void add(Label gold, std::optional<Label> predicted) {
    if (gold == Label::Buggy) {
      (predicted == Label::Buggy ? tp : fn) += 1;
    } else {
      (predicted == Label::Clean ? tn : fp) += 1;
    }
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

struct EvalMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t unparsed_count = 0;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline EvalMetrics compute_metrics(const ConfusionMatrix& cm, std::size_t unparsed_count = 0) {
  if (cm.total() == 0) throw Error(ErrorKind::EmptyRun, "no scored samples");
  auto ratio = [](std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  EvalMetrics m;
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.f1 = f1_score(m.precision, m.recall);
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.unparsed_count = unparsed_count;
  return m;
}

/// 100 * (new - base) / base, in percent.
inline double relative_improvement(double base, double updated) {
  if (!(base > 0.0)) throw Error(ErrorKind::UndefinedBaseline, "baseline value must be positive");
  return 100.0 * (updated - base) / base;
}

struct SampleRow {
  std::int64_t sample_id = 0;
  Label gold = Label::Clean;
  std::optional<Label> predicted;
  ParseMode parse_mode = ParseMode::Fallback;
  double latency_ms = 0.0;
  std::string raw_output;
  std::string error;  // non-empty when no prompt could be built for the sample

  bool same_outcome(const SampleRow& o) const {
    return sample_id == o.sample_id && gold == o.gold && predicted == o.predicted && parse_mode == o.parse_mode &&
           raw_output == o.raw_output && error == o.error;
  }
};

struct RunRecord {
  std::string run_id;
  ScenarioConfig scenario;
  std::string backend;
  std::optional<FineTuneProfile> fine_tune;
  std::string dataset_path;
  std::string dataset_digest;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  bool complete = true;
  std::vector<SampleRow> rows;
  ConfusionMatrix confusion;
  EvalMetrics metrics;
};

/// Raised when a run stops early; carries the partial record.
class RunAborted : public Error {
 public:
  RunAborted(const Error& cause, RunRecord partial)
      : Error(cause.kind(), std::string("run aborted: ") + cause.what()), partial_(std::move(partial)) {}

  const RunRecord& partial() const noexcept { return partial_; }

 private:
  RunRecord partial_;
};

inline ConfusionMatrix confusion_from_rows(const std::vector<SampleRow>& rows) {
  ConfusionMatrix cm;
  for (const auto& r : rows) cm.add(r.gold, r.predicted);
  return cm;
}

inline std::size_t unparsed_in(const std::vector<SampleRow>& rows) {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SampleRow& r) { return !r.predicted; }));
}

/// True when the stored matrix equals the one recomputed from per-sample rows.
inline bool reconciles(const RunRecord& record) { return confusion_from_rows(record.rows) == record.confusion; }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

struct RunOptions {
  // Exemplar pool; the dataset itself when empty (the target is always excluded).
  std::optional<std::vector<CodeSample>> pool;
  std::string dataset_path;
  std::optional<FineTuneProfile> fine_tune;
  std::string run_id;
  // Upper bound on concurrent classify calls; 0 = backend's max_parallel().
  std::size_t max_parallel = 0;
  // When set, the record is written there (also for aborted runs).
  std::optional<std::filesystem::path> output_dir;
};

void write_run_record(const RunRecord& record, const std::filesystem::path& dir);

/// Reviews every sample under one scenario and scores the verdicts.
/// Per-sample results are stored by dataset position, so the outcome does not
/// depend on request completion order.
inline RunRecord run_scenario(const std::vector<CodeSample>& dataset, const ScenarioConfig& scenario,
                              Backend& backend, const KnowledgeMap& map, std::uint64_t seed,
                              const RunOptions& options = {}) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyRun, "dataset is empty");
  scenario.validate();

  RunRecord record;
  record.scenario = scenario;
  record.scenario.seed = seed;
  record.backend = backend.descriptor();
  record.fine_tune = options.fine_tune;
  record.dataset_path = options.dataset_path;
  record.dataset_digest = dataset_digest(dataset);
  record.seed = seed;
  record.started_at = utc_timestamp();
  record.run_id = options.run_id.empty()
                      ? std::string(to_string(scenario.kind)) + "-" + record.started_at + "-" +
                            record.dataset_digest.substr(0, 8)
                      : options.run_id;
  std::replace(record.run_id.begin(), record.run_id.end(), ':', '-');

  const auto& pool = options.pool ? *options.pool : dataset;
  std::vector<std::optional<SampleRow>> slots(dataset.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex failure_mutex;
  std::optional<Error> failure;

  auto review = [&](std::size_t index) {
    const CodeSample& sample = dataset[index];
    SampleRow row;
    row.sample_id = sample.id;
    row.gold = sample.label;

    ScenarioConfig per_sample = record.scenario;
    per_sample.seed = mix_seed(seed, static_cast<std::uint64_t>(sample.id));
    std::optional<std::vector<Finding>> findings;
    if (per_sample.include_findings) findings = analyze(sample.source, map);

    PromptBundle bundle;
    try {
      bundle = build_prompt(sample, per_sample, pool, map, findings);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Budget && e.kind() != ErrorKind::Selection) throw;
      row.error = e.what();
      return row;
    }
    const Verdict verdict = backend.classify(bundle, SampleContext{sample.id, sample.source, sample.label});
    row.predicted = verdict.label;
    row.parse_mode = verdict.parse_mode;
    row.latency_ms = verdict.latency_ms;
    row.raw_output = verdict.raw_output;
    return row;
  };

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t index = next.fetch_add(1);
      if (index >= dataset.size()) return;
      try {
        slots[index] = review(index);
      } catch (const Error& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = e;
        stop = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = Error(ErrorKind::BackendUnavailable, e.what());
        stop = true;
      }
    }
  };

  std::size_t parallel = options.max_parallel ? options.max_parallel : backend.max_parallel();
  parallel = std::clamp<std::size_t>(std::min(parallel, backend.max_parallel()), 1, dataset.size());
  if (parallel == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(parallel);
    for (std::size_t i = 0; i < parallel; ++i) threads.emplace_back(worker);
  }

  for (auto& slot : slots) {
    if (slot) record.rows.push_back(std::move(*slot));
  }
  record.confusion = confusion_from_rows(record.rows);
  if (record.confusion.total() > 0) record.metrics = compute_metrics(record.confusion, unparsed_in(record.rows));
  record.finished_at = utc_timestamp();
  record.complete = !failure;

  if (options.output_dir) write_run_record(record, *options.output_dir);
  if (failure) throw RunAborted(*failure, std::move(record));
  return record;
}

// -- persistence -------------------------------------------------------------

inline ojson row_to_json(const SampleRow& r) {
  ojson j = ojson::object();
  j["sample_id"] = r.sample_id;
  j["gold"] = std::string(to_string(r.gold));
  j["predicted"] = r.predicted ? ojson(std::string(to_string(*r.predicted))) : ojson(nullptr);
  j["parse_mode"] = std::string(to_string(r.parse_mode));
  j["latency_ms"] = r.latency_ms;
  j["raw_output"] = r.raw_output;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline Label label_from_name(const std::string& name) {
  if (name == "buggy") return Label::Buggy;
  if (name == "clean") return Label::Clean;
  throw Error(ErrorKind::Validation, "unknown label '" + name + "'");
}

inline SampleRow row_from_json(const ojson& j) {
  SampleRow r;
  r.sample_id = j.at("sample_id").get<std::int64_t>();
  r.gold = label_from_name(j.at("gold").get<std::string>());
  if (!j.at("predicted").is_null()) r.predicted = label_from_name(j.at("predicted").get<std::string>());
  r.parse_mode = parse_mode_from_string(j.at("parse_mode").get<std::string>());
  r.latency_ms = j.value("latency_ms", 0.0);
  r.raw_output = j.value("raw_output", std::string());
  r.error = j.value("error", std::string());
  return r;
}

inline ojson metrics_to_json(const EvalMetrics& m) {
  return ojson{{"precision", m.precision},
               {"recall", m.recall},
               {"f1", m.f1},
               {"accuracy", m.accuracy},
               {"unparsed_count", m.unparsed_count}};
}

inline ojson record_to_json(const RunRecord& r) {
  ojson j = ojson::object();
  j["run_id"] = r.run_id;
  j["scenario"] = scenario_to_json(r.scenario);
  j["backend"] = r.backend;
  j["fine_tune"] = r.fine_tune ? profile_to_json(*r.fine_tune) : ojson(nullptr);
  j["dataset"] = {{"path", r.dataset_path}, {"digest", r.dataset_digest}};
  j["seed"] = r.seed;
  j["started_at"] = r.started_at;
  j["finished_at"] = r.finished_at;
  j["complete"] = r.complete;
  j["confusion_matrix"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["metrics"] = metrics_to_json(r.metrics);
  j["rows"] = r.run_id + ".rows.jsonl";
  return j;
}

inline std::filesystem::path record_path(const std::filesystem::path& dir, const std::string& run_id) {
  return dir / (run_id + ".json");
}

/// Writes `<dir>/<run-id>.json` and the `<dir>/<run-id>.rows.jsonl` sidecar.
inline void write_run_record(const RunRecord& record, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::ofstream rows(dir / (record.run_id + ".rows.jsonl"), std::ios::binary | std::ios::trunc);
  if (!rows) throw Error(ErrorKind::Io, "cannot write rows for run " + record.run_id);
  for (const auto& r : record.rows) rows << row_to_json(r).dump() << '\n';

  std::ofstream out(record_path(dir, record.run_id), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write run record " + record.run_id);
  out << record_to_json(record).dump(2) << '\n';
  if (!out || !rows) throw Error(ErrorKind::Io, "write failed for run " + record.run_id);
}

/// Reads a run record and its rows sidecar (resolved next to the record).
inline RunRecord read_run_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read run record '" + path.string() + "'");
  RunRecord r;
  try {
    const auto j = ojson::parse(in);
    r.run_id = j.at("run_id").get<std::string>();
    r.scenario = scenario_from_json(j.at("scenario"));
    r.backend = j.at("backend").get<std::string>();
    if (j.contains("fine_tune") && !j["fine_tune"].is_null()) r.fine_tune = profile_from_json(j["fine_tune"]);
    r.dataset_path = j.at("dataset").value("path", std::string());
    r.dataset_digest = j.at("dataset").at("digest").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.started_at = j.value("started_at", std::string());
    r.finished_at = j.value("finished_at", std::string());
    r.complete = j.value("complete", true);
    const auto& cm = j.at("confusion_matrix");
    r.confusion = {cm.at("tp").get<std::size_t>(), cm.at("fp").get<std::size_t>(), cm.at("fn").get<std::size_t>(),
                   cm.at("tn").get<std::size_t>()};
    const auto& m = j.at("metrics");
    r.metrics = {m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>(),
                 m.at("accuracy").get<double>(), m.value("unparsed_count", std::size_t{0})};

    const auto rows_path = path.parent_path() / j.value("rows", r.run_id + ".rows.jsonl");
    std::ifstream rows(rows_path, std::ios::binary);
    if (rows) {
      std::string line;
      while (std::getline(rows, line)) {
        if (!detail::is_blank(line)) r.rows.push_back(row_from_json(ojson::parse(line)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return r;
}

// -- comparison --------------------------------------------------------------

struct ComparisonRow {
  std::string run_id;
  std::string scenario;
  std::string backend;
  EvalMetrics metrics;
  std::string baseline_id;
  double accuracy_improvement_pct = 0.0;
  bool is_baseline = false;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  // Mean accuracy improvement over non-baseline rows; empty if there are none.
  std::optional<double> mean_improvement_pct;
};

namespace detail {

inline void require_same_digest(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorKind::Validation, "no run records to compare");
  for (const auto& r : records) {
    if (r.dataset_digest != records.front().dataset_digest) {
      throw Error(ErrorKind::IncomparableRuns, "run " + r.run_id + " used a different dataset than " +
                                                   records.front().run_id);
    }
  }
}

inline ComparisonRow comparison_row(const RunRecord& r, const RunRecord& baseline) {
  ComparisonRow row;
  row.run_id = r.run_id;
  row.scenario = std::string(to_string(r.scenario.kind));
  row.backend = r.backend;
  row.metrics = r.metrics;
  row.baseline_id = baseline.run_id;
  row.is_baseline = &r == &baseline;
  row.accuracy_improvement_pct = relative_improvement(baseline.metrics.accuracy, r.metrics.accuracy);
  return row;
}

inline void finish_mean(ComparisonTable& table) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : table.rows) {
    if (row.is_baseline) continue;
    sum += row.accuracy_improvement_pct;
    ++n;
  }
  if (n) table.mean_improvement_pct = sum / static_cast<double>(n);
}

}  // namespace detail

/// One row per run with its accuracy improvement over the named baseline run.
inline ComparisonTable compare_runs(const std::vector<RunRecord>& records, const std::string& baseline_id) {
  detail::require_same_digest(records);
  auto base = std::find_if(records.begin(), records.end(), [&](const RunRecord& r) { return r.run_id == baseline_id; });
  if (base == records.end()) throw Error(ErrorKind::Lookup, "baseline run '" + baseline_id + "' not among the records");
  ComparisonTable table;
  for (const auto& r : records) table.rows.push_back(detail::comparison_row(r, *base));
  detail::finish_mean(table);
  return table;
}

/// Groups runs by backend and compares each against the run of the baseline
/// scenario in its own group (one model, several scenarios).
inline ComparisonTable compare_runs_by_backend(const std::vector<RunRecord>& records, ScenarioKind baseline) {
  detail::require_same_digest(records);
  ComparisonTable table;
  for (const auto& r : records) {
    auto base = std::find_if(records.begin(), records.end(), [&](const RunRecord& b) {
      return b.backend == r.backend && b.scenario.kind == baseline;
    });
    if (base == records.end()) {
      throw Error(ErrorKind::Lookup, "no " + std::string(to_string(baseline)) + " run for backend " + r.backend);
    }
    table.rows.push_back(detail::comparison_row(r, *base));
  }
  detail::finish_mean(table);
  return table;
}

inline std::string format_table(const ComparisonTable& table) {
  std::size_t id_width = 6;
  std::size_t backend_width = 7;
  for (const auto& r : table.rows) {
    id_width = std::max(id_width, r.run_id.size());
    backend_width = std::max(backend_width, r.backend.size());
  }
  std::string out = fmt::format("{:<{}}  {:<10}  {:<{}}  {:>9}  {:>6}  {:>8}  {:>8}  {:>9}\n", "run_id", id_width,
                                "scenario", "backend", backend_width, "precision", "recall", "f1-score", "accuracy",
                                "vs base");
  for (const auto& r : table.rows) {
    out += fmt::format("{:<{}}  {:<10}  {:<{}}  {:>9.3f}  {:>6.3f}  {:>8.3f}  {:>8.3f}  {:>9}\n", r.run_id, id_width,
                       r.scenario, r.backend, backend_width, r.metrics.precision, r.metrics.recall, r.metrics.f1,
                       r.metrics.accuracy,
                       r.is_baseline ? std::string("baseline") : fmt::format("{:+.2f}%", r.accuracy_improvement_pct));
  }
  if (table.mean_improvement_pct) {
    out += fmt::format("mean accuracy improvement: {:.2f}%\n", *table.mean_improvement_pct);
  }
  return out;
}

inline std::string format_csv(const ComparisonTable& table) {
  std::string out = "run_id,scenario,backend,precision,recall,f1,accuracy,baseline_id,accuracy_improvement_pct\n";
  for (const auto& r : table.rows) {
    out += fmt::format("{},{},{},{:.3f},{:.3f},{:.3f},{:.3f},{},{:.2f}\n", r.run_id, r.scenario, r.backend,
                       r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.accuracy, r.baseline_id,
                       r.accuracy_improvement_pct);
  }
  return out;
}

// -- table consistency ---------------------------------------------------------

struct TableRow {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ConsistencyFlag {
  std::string label;
  double reported_f1 = 0.0;
  double computed_f1 = 0.0;
  double delta = 0.0;
  bool flagged = false;
};

inline constexpr double kF1Tolerance = 0.01;

/// Recomputes F1 from each row's precision and recall and flags rows whose
/// reported F1 differs by more than the tolerance.
inline std::vector<ConsistencyFlag> table_consistency_check(const std::vector<TableRow>& rows,
                                                            double tolerance = kF1Tolerance) {
  std::vector<ConsistencyFlag> flags;
  flags.reserve(rows.size());
  for (const auto& row : rows) {
    ConsistencyFlag f;
    f.label = row.label;
    f.reported_f1 = row.f1;
    f.computed_f1 = f1_score(row.precision, row.recall);
    f.delta = f.computed_f1 - f.reported_f1;
    f.flagged = std::abs(f.delta) > tolerance;
    flags.push_back(std::move(f));
  }
  return flags;
}

/// CSV rows of `label,precision,recall,f1[,...]` or `precision,recall,f1`.
/// A non-numeric first line is taken as a header; `#` lines are comments.
inline std::vector<TableRow> parse_table_csv(std::istream& in) {
  std::vector<TableRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::is_blank(line) || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 3) throw ParseError("expected at least 3 comma-separated fields", line_no);
    const std::size_t offset = fields.size() == 3 ? 0 : 1;
    TableRow row;
    row.label = offset ? fields[0] : "row " + std::to_string(rows.size() + 1);
    try {
      std::size_t used = 0;
      auto number = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (!detail::is_blank(std::string_view(s).substr(used))) throw std::invalid_argument(s);
        return v;
      };
      row.precision = number(fields[offset]);
      row.recall = number(fields[offset + 1]);
      row.f1 = number(fields[offset + 2]);
    } catch (const std::logic_error&) {
      if (first) {
        first = false;
        continue;
      }
      throw ParseError("non-numeric precision/recall/f1", line_no);
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace symreview
