#pragma once

// Command-line front end. Exit codes:
//   0  success / nothing found / verdict clean
//   1  a problem was found (Defect finding, buggy verdict, flagged table row)
//   2  error (bad flags, unreadable input, backend failure, aborted run)

#include <symreview/symreview.hpp>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef SYMREVIEW_DATA_DIR
#define SYMREVIEW_DATA_DIR "data"
#endif

namespace symreview::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFound = 1;
inline constexpr int kExitError = 2;

inline std::string default_pool_path() { return std::string(SYMREVIEW_DATA_DIR) + "/mini.jsonl"; }

inline std::string read_text(const std::string& path) {
  if (path == "-") {
    std::stringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path)) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Defaults loaded from `--config`; flags given on the command line win.
struct FileConfig {
  std::optional<BackendConfig> backend;
  PromptBudget budget;
  std::optional<ScenarioKind> scenario;
  std::optional<std::size_t> shots;
  std::optional<bool> include_findings;
  std::optional<FineTuneProfile> fine_tune;
};

inline FileConfig load_config(const std::string& path) {
  FileConfig config;
  if (path.empty()) return config;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      BackendConfig bc;
      bc.endpoint = b.value("endpoint", std::string());
      bc.token_env = b.value("token_env", bc.token_env);
      bc.timeout_ms = b.value("timeout_ms", bc.timeout_ms);
      bc.max_retries = b.value("max_retries", bc.max_retries);
      bc.max_parallel_requests = b.value("max_parallel_requests", bc.max_parallel_requests);
      bc.backoff_initial_ms = b.value("backoff_initial_ms", bc.backoff_initial_ms);
      bc.backoff_max_ms = b.value("backoff_max_ms", bc.backoff_max_ms);
      bc.validate();
      config.backend = bc;
    }
    if (j.contains("budget")) {
      config.budget.max_chars = j["budget"].value("max_chars", config.budget.max_chars);
      config.budget.exemplar_max_chars = j["budget"].value("exemplar_max_chars", config.budget.exemplar_max_chars);
      config.budget.validate();
    }
    if (j.contains("scenario")) {
      const auto& s = j["scenario"];
      if (s.contains("kind")) config.scenario = scenario_from_string(s["kind"].get<std::string>());
      if (s.contains("shots")) config.shots = s["shots"].get<std::size_t>();
      if (s.contains("include_findings")) config.include_findings = s["include_findings"].get<bool>();
    }
    if (j.contains("fine_tune")) config.fine_tune = profile_from_json(ojson::parse(j["fine_tune"].dump()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, "config '" + path + "': " + e.what());
  }
  return config;
}

struct Globals {
  std::string config_path;
  std::string catalog_path;
  std::uint64_t seed = 42;
  bool verbose = false;
};

struct ScenarioFlags {
  std::string scenario;
  std::optional<std::size_t> shots;
  bool no_findings = false;
  std::string pool;
};

struct BackendFlags {
  std::string backend_url;
  std::string mock;
  std::string canned;
  std::optional<int> timeout_ms;
  std::optional<int> max_retries;
  std::optional<int> parallel;
};

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"symreview: symbolic + language-model code review and evaluation harness"};
    app.fallthrough();
    app.footer(R"(Formats:
  dataset      JSONL, one object per line: {"idx": int (optional), "func": str, "target": 0|1}.
               target 1 = buggy, 0 = clean; --invert-labels swaps them. Other keys are kept.
  wire         POST <backend-url>/v1/classify
               request  {"prompt": str, "max_new_tokens": 8, "temperature": 0.0}
               response {"completion": str}
               Authorization: Bearer $REVIEW_BACKEND_TOKEN when that variable is set and non-empty.
  canned       JSON object mapping sample idx (as a string) to a completion string.
  verdicts     completion trimmed and lowercased; "buggy"/"1" and "clean"/"0" are exact,
               otherwise a whole-word scan for buggy/defective vs clean/correct.
  run record   <out>/<run-id>.json plus <out>/<run-id>.rows.jsonl.
Exit codes:
  0 success, nothing found   1 defect, buggy verdict or flagged rows   2 error)");
    app.require_subcommand(1);
    app.add_option("--config", globals_.config_path, "JSON config with backend, budget and scenario defaults");
    app.add_option("--catalog", globals_.catalog_path, "knowledge-map catalog (JSON array of rules)");
    app.add_option("--seed", globals_.seed, "seed for every randomized step")->capture_default_str();
    app.add_flag("--verbose", globals_.verbose, "debug logging on stderr");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "run the symbolic detectors over a Python source file");
    std::string analyze_path = "-";
    std::string analyze_format = "pretty";
    bool strict = false;
    analyze->add_option("path", analyze_path, "source file, or - for stdin");
    add_format(analyze, analyze_format);
    analyze->add_flag("--strict", strict, "fail on unparseable regions instead of skipping them");

    // review
    auto* review = app.add_subcommand("review", "classify one snippet as buggy or clean");
    std::string review_path;
    std::optional<std::int64_t> review_sample;
    std::string review_format = "pretty";
    ScenarioFlags review_scenario;
    BackendFlags review_backend;
    review->add_option("path", review_path, "source file, or a dataset when --sample is given")->required();
    review->add_option("--sample", review_sample, "review the dataset sample with this idx (gold label known)");
    add_scenario_flags(review, review_scenario);
    add_backend_flags(review, review_backend);
    add_format(review, review_format);

    // prompt preview
    auto* prompt = app.add_subcommand("prompt", "prompt inspection");
    prompt->require_subcommand(1);
    auto* preview = prompt->add_subcommand("preview", "print the prompt a scenario would send");
    std::string preview_path;
    std::optional<std::int64_t> preview_sample;
    std::string preview_out;
    ScenarioFlags preview_scenario;
    preview->add_option("path", preview_path, "source file, or a dataset when --sample is given")->required();
    preview->add_option("--sample", preview_sample, "use the dataset sample with this idx");
    preview->add_option("--out", preview_out, "write <prefix>.txt and <prefix>.json instead of printing");
    add_scenario_flags(preview, preview_scenario);

    // eval
    auto* eval = app.add_subcommand("eval", "scenario runs and comparison tables");
    eval->require_subcommand(1);
    auto* eval_run = eval->add_subcommand("run", "run one scenario over a dataset and write a run record");
    std::string run_dataset, run_out = "runs", run_id, run_format = "pretty";
    std::optional<std::size_t> run_limit;
    bool run_inverted = false;
    ScenarioFlags run_scenario_flags;
    BackendFlags run_backend;
    eval_run->add_option("--dataset", run_dataset, "dataset JSONL")->required();
    eval_run->add_option("--out", run_out, "directory for run records")->capture_default_str();
    eval_run->add_option("--run-id", run_id, "explicit run id");
    eval_run->add_option("--limit", run_limit, "only the first N samples");
    eval_run->add_flag("--invert-labels", run_inverted, "dataset uses 0 = buggy, 1 = clean");
    add_scenario_flags(eval_run, run_scenario_flags);
    add_backend_flags(eval_run, run_backend);
    add_format(eval_run, run_format);

    auto* eval_compare = eval->add_subcommand("compare", "compare run records against a baseline");
    std::vector<std::string> compare_records;
    std::string compare_baseline, compare_baseline_scenario, compare_format = "text", compare_out;
    eval_compare->add_option("records", compare_records, "run record JSON files")->required();
    auto* baseline_opt = eval_compare->add_option("--baseline", compare_baseline, "baseline run id (default: first)");
    eval_compare
        ->add_option("--baseline-scenario", compare_baseline_scenario,
                     "compare each backend's runs against its run of this scenario")
        ->excludes(baseline_opt);
    eval_compare->add_option("--format", compare_format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}))
        ->capture_default_str();
    eval_compare->add_option("--out", compare_out, "also write the CSV table here");

    auto* eval_check = eval->add_subcommand("check-tables", "recompute F1 from P and R for each CSV row");
    std::string check_path;
    double tolerance = kF1Tolerance;
    eval_check->add_option("csv", check_path, "CSV of label,precision,recall,f1 rows")->required();
    eval_check->add_option("--tolerance", tolerance, "allowed |computed - reported| F1")->capture_default_str();

    auto* eval_reference = eval->add_subcommand("reference", "recompute the published comparison arithmetic");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "dataset utilities");
    dataset->require_subcommand(1);
    std::string ds_path, ds_format = "pretty", ds_out, ds_train_out, ds_eval_out;
    bool ds_inverted = false;
    double ds_fraction = 0.8;
    auto* ds_stats = dataset->add_subcommand("stats", "class counts and buggy ratio");
    ds_stats->add_option("path", ds_path, "dataset JSONL")->required();
    add_format(ds_stats, ds_format);
    ds_stats->add_flag("--invert-labels", ds_inverted, "dataset uses 0 = buggy, 1 = clean");
    auto* ds_resample = dataset->add_subcommand("resample", "random oversampling of the minority class to parity");
    ds_resample->add_option("path", ds_path, "dataset JSONL")->required();
    ds_resample->add_option("--out", ds_out, "output JSONL (default: stdout)");
    ds_resample->add_flag("--invert-labels", ds_inverted, "dataset uses 0 = buggy, 1 = clean");
    auto* ds_split = dataset->add_subcommand("split", "seeded train/eval split");
    ds_split->add_option("path", ds_path, "dataset JSONL")->required();
    ds_split->add_option("--fraction", ds_fraction, "train fraction in (0, 1)")->capture_default_str();
    ds_split->add_option("--train-out", ds_train_out, "train split JSONL")->required();
    ds_split->add_option("--eval-out", ds_eval_out, "eval split JSONL")->required();
    ds_split->add_flag("--invert-labels", ds_inverted, "dataset uses 0 = buggy, 1 = clean");

    // catalog
    auto* catalog = app.add_subcommand("catalog", "knowledge-map catalog");
    catalog->require_subcommand(1);
    std::string catalog_out, catalog_format = "text";
    std::vector<std::string> catalog_categories;
    auto* catalog_show = catalog->add_subcommand("show", "print the catalog as prompt context");
    catalog_show->add_option("--category", catalog_categories, "restrict to these categories");
    catalog_show->add_option("--format", catalog_format, "text or json")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();
    auto* catalog_export = catalog->add_subcommand("export", "write the catalog as JSON");
    catalog_export->add_option("--out", catalog_out, "output file")->required();

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    }

    spdlog::set_level(globals_.verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
      config_ = load_config(globals_.config_path);
      if (!globals_.catalog_path.empty()) {
        map_ = load_map(globals_.catalog_path).map;
      }

      if (analyze->parsed()) return cmd_analyze(analyze_path, analyze_format, strict);
      if (review->parsed()) return cmd_review(review_path, review_sample, review_scenario, review_backend, review_format);
      if (preview->parsed()) return cmd_prompt_preview(preview_path, preview_sample, preview_scenario, preview_out);
      if (eval_run->parsed()) {
        return cmd_eval_run(run_dataset, run_scenario_flags, run_backend, run_out, run_id, run_limit, run_inverted,
                            run_format);
      }
      if (eval_compare->parsed()) {
        return cmd_eval_compare(compare_records, compare_baseline, compare_baseline_scenario, compare_format,
                                compare_out);
      }
      if (eval_check->parsed()) return cmd_check_tables(check_path, tolerance);
      if (eval_reference->parsed()) {
        out_ << reference::arithmetic_report();
        return kExitOk;
      }
      const auto polarity = ds_inverted ? Polarity::Inverted : Polarity::Standard;
      if (ds_stats->parsed()) return cmd_dataset_stats(ds_path, polarity, ds_format);
      if (ds_resample->parsed()) return cmd_dataset_resample(ds_path, polarity, ds_out);
      if (ds_split->parsed()) return cmd_dataset_split(ds_path, polarity, ds_fraction, ds_train_out, ds_eval_out);
      if (catalog_show->parsed()) return cmd_catalog_show(catalog_categories, catalog_format);
      if (catalog_export->parsed()) {
        save_map(catalog_out, map_);
        out_ << "wrote " << map_.rules.size() << " rules to " << catalog_out << "\n";
        return kExitOk;
      }
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    }
    return kExitError;
  }

 private:
  static void add_format(CLI::App* cmd, std::string& format) {
    cmd->add_option("--format", format, "json or pretty")
        ->check(CLI::IsMember({"json", "pretty"}))
        ->capture_default_str();
  }

  static void add_scenario_flags(CLI::App* cmd, ScenarioFlags& flags) {
    cmd->add_option("--scenario", flags.scenario, "base, few-shot, fine-tuned or hybrid (default hybrid)")
        ->check(CLI::IsMember({"base", "few-shot", "fine-tuned", "hybrid"}));
    cmd->add_option("--shots", flags.shots, "number of labeled exemplars");
    cmd->add_flag("--no-findings", flags.no_findings, "hybrid: send the catalog only, without per-sample findings");
    cmd->add_option("--pool", flags.pool, "dataset to draw exemplars from (default: bundled mini.jsonl)");
  }

  static void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
    auto* url = cmd->add_option("--backend-url", flags.backend_url, "classification endpoint base URL");
    cmd->add_option("--mock", flags.mock, "echo-gold, invert-gold, always-buggy, findings-oracle or canned")
        ->check(CLI::IsMember({"echo-gold", "invert-gold", "always-buggy", "findings-oracle", "canned"}))
        ->excludes(url);
    cmd->add_option("--canned", flags.canned, "completions file for --mock canned");
    cmd->add_option("--timeout-ms", flags.timeout_ms, "per-request timeout");
    cmd->add_option("--max-retries", flags.max_retries, "retries after transport failures");
    cmd->add_option("--parallel", flags.parallel, "maximum concurrent requests");
  }

  ScenarioConfig scenario_from_flags(const ScenarioFlags& flags) const {
    const ScenarioKind kind = !flags.scenario.empty() ? scenario_from_string(flags.scenario)
                                                      : config_.scenario.value_or(ScenarioKind::Hybrid);
    ScenarioConfig s = ScenarioConfig::for_kind(kind, globals_.seed);
    s.budget = config_.budget;
    if (config_.shots && (kind == ScenarioKind::FewShot || kind == ScenarioKind::Hybrid)) s.shots = *config_.shots;
    if (flags.shots) s.shots = *flags.shots;
    if (config_.include_findings && kind == ScenarioKind::Hybrid) s.include_findings = *config_.include_findings;
    if (flags.no_findings) {
      if (kind != ScenarioKind::Hybrid) throw Error(ErrorKind::Validation, "--no-findings only applies to hybrid");
      s.include_findings = false;
    }
    s.validate();
    return s;
  }

  std::unique_ptr<Backend> backend_from_flags(const BackendFlags& flags) const {
    if (!flags.mock.empty()) {
      const MockMode mode = mock_mode_from_string(flags.mock);
      if (mode == MockMode::Canned) {
        if (flags.canned.empty()) throw Error(ErrorKind::Validation, "--mock canned needs --canned <file>");
        return MockBackend::from_file(flags.canned);
      }
      return std::make_unique<MockBackend>(mode, map_);
    }
    BackendConfig bc = config_.backend.value_or(BackendConfig{});
    if (!flags.backend_url.empty()) bc.endpoint = flags.backend_url;
    if (bc.endpoint.empty()) throw Error(ErrorKind::Validation, "choose --backend-url or --mock");
    if (flags.timeout_ms) bc.timeout_ms = *flags.timeout_ms;
    if (flags.max_retries) bc.max_retries = *flags.max_retries;
    if (flags.parallel) bc.max_parallel_requests = *flags.parallel;
    return std::make_unique<HttpBackend>(bc);
  }

  struct Target {
    CodeSample sample;
    std::optional<Label> gold;
  };

  Target load_target(const std::string& path, const std::optional<std::int64_t>& sample_id) const {
    Target t;
    if (sample_id) {
      const auto samples = load_dataset(path);
      auto it = std::find_if(samples.begin(), samples.end(), [&](const CodeSample& s) { return s.id == *sample_id; });
      if (it == samples.end()) throw Error(ErrorKind::Lookup, "no sample with idx " + std::to_string(*sample_id));
      t.sample = *it;
      t.gold = it->label;
      return t;
    }
    t.sample.source = read_text(path);
    t.sample.id = -1;
    return t;
  }

  std::vector<CodeSample> load_pool(const ScenarioConfig& s, const std::string& pool_path) const {
    if (s.shots == 0) return {};
    return load_dataset(pool_path.empty() ? default_pool_path() : pool_path);
  }

  int cmd_analyze(const std::string& path, const std::string& format, bool strict) {
    const std::string source = read_text(path);
    const auto result =
        analyze_detailed(source, map_, strict ? syntax::ParseMode::Strict : syntax::ParseMode::Tolerant);
    for (const auto& note : result.notes) spdlog::info("{}", note);
    if (format == "json") {
      out_ << findings_to_json(result.findings).dump(2) << "\n";
    } else if (result.findings.empty()) {
      out_ << "no findings\n";
    } else {
      for (const auto& f : result.findings) {
        const Rule* rule = map_.find(f.rule_id);
        out_ << (path == "-" ? "<stdin>" : path) << ":" << f.line << ": " << f.rule_id << " ["
             << (rule ? to_string(rule->severity) : "?") << "] " << f.message << "\n    " << f.excerpt << "\n";
      }
      out_ << result.findings.size() << " finding(s)\n";
    }
    return has_defect(result.findings, map_) ? kExitFound : kExitOk;
  }

  int cmd_review(const std::string& path, const std::optional<std::int64_t>& sample_id, const ScenarioFlags& sflags,
                 const BackendFlags& bflags, const std::string& format) {
    const ScenarioConfig scenario = scenario_from_flags(sflags);
    auto backend = backend_from_flags(bflags);
    const auto target = load_target(path, sample_id);
    if (!target.gold && !bflags.mock.empty()) {
      const auto mode = mock_mode_from_string(bflags.mock);
      if (mode == MockMode::EchoGold || mode == MockMode::InvertGold) {
        throw Error(ErrorKind::Validation, "--mock " + bflags.mock + " needs a labeled sample; use a dataset with --sample");
      }
    }
    const auto pool = load_pool(scenario, sflags.pool);
    const auto findings = analyze(target.sample.source, map_);
    const auto bundle = build_prompt(target.sample, scenario, pool, map_,
                                     scenario.include_findings ? std::optional(findings) : std::nullopt);
    const Verdict verdict = backend->classify(bundle, SampleContext{target.sample.id, target.sample.source, target.gold});
    const Label label = verdict.require_label();

    if (format == "json") {
      ojson j = ojson::object();
      j["verdict"] = std::string(to_string(label));
      j["parse_mode"] = std::string(to_string(verdict.parse_mode));
      j["raw_output"] = verdict.raw_output;
      j["latency_ms"] = verdict.latency_ms;
      j["findings"] = findings_to_json(findings);
      j["prompt"] = bundle_sidecar(bundle);
      j["backend"] = backend->descriptor();
      out_ << j.dump(2) << "\n";
    } else {
      out_ << "verdict: " << to_string(label) << " (" << to_string(verdict.parse_mode) << ")\n";
      out_ << "raw output: " << verdict.raw_output << "\n";
      out_ << "findings: " << findings.size() << "\n";
      for (const auto& f : findings) out_ << "  line " << f.line << "  " << f.rule_id << "  " << f.message << "\n";
      out_ << "prompt: " << bundle.text.size() << " chars, scenario " << to_string(scenario.kind) << ", "
           << bundle.exemplar_ids.size() << " exemplar(s)\n";
      out_ << "backend: " << backend->descriptor() << "\n";
    }
    return label == Label::Buggy ? kExitFound : kExitOk;
  }

  int cmd_prompt_preview(const std::string& path, const std::optional<std::int64_t>& sample_id,
                         const ScenarioFlags& sflags, const std::string& out_prefix) {
    const ScenarioConfig scenario = scenario_from_flags(sflags);
    const auto target = load_target(path, sample_id);
    const auto pool = load_pool(scenario, sflags.pool);
    std::optional<std::vector<Finding>> findings;
    if (scenario.include_findings) findings = analyze(target.sample.source, map_);
    const auto bundle = build_prompt(target.sample, scenario, pool, map_, findings);
    const std::string sidecar = bundle_sidecar(bundle).dump(2) + "\n";
    if (out_prefix.empty()) {
      out_ << bundle.text << "\n";
      err_ << sidecar;
      return kExitOk;
    }
    std::ofstream text(out_prefix + ".txt", std::ios::binary | std::ios::trunc);
    std::ofstream json(out_prefix + ".json", std::ios::binary | std::ios::trunc);
    if (!text || !json) throw Error(ErrorKind::Io, "cannot write " + out_prefix + ".txt/.json");
    text << bundle.text;
    json << sidecar;
    out_ << "wrote " << out_prefix << ".txt and " << out_prefix << ".json\n";
    return kExitOk;
  }

  int cmd_eval_run(const std::string& dataset_path, const ScenarioFlags& sflags, const BackendFlags& bflags,
                   const std::string& out_dir, const std::string& run_id, const std::optional<std::size_t>& limit,
                   bool inverted, const std::string& format) {
    const ScenarioConfig scenario = scenario_from_flags(sflags);
    auto backend = backend_from_flags(bflags);
    LoadOptions load;
    load.limit = limit;
    load.polarity = inverted ? Polarity::Inverted : Polarity::Standard;
    const auto dataset = load_dataset(dataset_path, load);

    RunOptions options;
    options.dataset_path = dataset_path;
    options.run_id = run_id;
    options.output_dir = out_dir;
    options.fine_tune = config_.fine_tune;
    if (!sflags.pool.empty()) options.pool = load_dataset(sflags.pool);

    RunRecord record;
    try {
      record = run_scenario(dataset, scenario, *backend, map_, globals_.seed, options);
    } catch (const RunAborted& e) {
      err_ << "error: " << e.what() << "\n";
      err_ << "partial record (" << e.partial().rows.size() << " of " << dataset.size()
           << " samples) written to " << record_path(out_dir, e.partial().run_id).string() << "\n";
      return kExitError;
    }

    if (format == "json") {
      out_ << record_to_json(record).dump(2) << "\n";
      return kExitOk;
    }
    const auto& m = record.metrics;
    out_ << "run " << record.run_id << ": " << record.rows.size() << " samples, scenario "
         << to_string(record.scenario.kind) << ", backend " << record.backend << "\n";
    out_ << fmt::format("precision {:.3f}  recall {:.3f}  f1 {:.3f}  accuracy {:.3f}  unparsed {}\n", m.precision,
                        m.recall, m.f1, m.accuracy, m.unparsed_count);
    out_ << "confusion tp=" << record.confusion.tp << " fp=" << record.confusion.fp << " fn=" << record.confusion.fn
         << " tn=" << record.confusion.tn << "\n";
    out_ << "record: " << record_path(out_dir, record.run_id).string() << "\n";
    return kExitOk;
  }

  int cmd_eval_compare(const std::vector<std::string>& paths, const std::string& baseline,
                       const std::string& baseline_scenario, const std::string& format, const std::string& csv_out) {
    std::vector<RunRecord> records;
    for (const auto& p : paths) records.push_back(read_run_record(p));
    const ComparisonTable table =
        !baseline_scenario.empty()
            ? compare_runs_by_backend(records, scenario_from_string(baseline_scenario))
            : compare_runs(records, baseline.empty() ? records.front().run_id : baseline);
    out_ << (format == "csv" ? format_csv(table) : format_table(table));
    if (!csv_out.empty()) {
      std::ofstream csv(csv_out, std::ios::binary | std::ios::trunc);
      if (!csv) throw Error(ErrorKind::Io, "cannot write '" + csv_out + "'");
      csv << format_csv(table);
    }
    return kExitOk;
  }

  int cmd_check_tables(const std::string& path, double tolerance) {
    std::istringstream in(read_text(path));
    const auto rows = parse_table_csv(in);
    const auto flags = table_consistency_check(rows, tolerance);
    std::size_t flagged = 0;
    for (const auto& f : flags) {
      flagged += f.flagged ? 1 : 0;
      out_ << fmt::format("{:<28} reported {:.3f}  computed {:.3f}  delta {:+.4f}  {}\n", f.label, f.reported_f1,
                          f.computed_f1, f.delta, f.flagged ? "FLAGGED" : "consistent");
    }
    out_ << flagged << " of " << flags.size() << " row(s) flagged (tolerance " << tolerance << ")\n";
    return flagged ? kExitFound : kExitOk;
  }

  int cmd_dataset_stats(const std::string& path, Polarity polarity, const std::string& format) {
    LoadOptions load;
    load.polarity = polarity;
    const auto s = stats(load_dataset(path, load));
    if (format == "json") {
      out_ << ojson{{"total", s.total}, {"clean_count", s.clean_count}, {"buggy_count", s.buggy_count},
                    {"buggy_ratio", s.buggy_ratio}}
                  .dump(2)
           << "\n";
    } else {
      out_ << fmt::format("total {}\nclean {}\nbuggy {}\nbuggy_ratio {:.3f}\n", s.total, s.clean_count, s.buggy_count,
                          s.buggy_ratio);
    }
    return kExitOk;
  }

  int cmd_dataset_resample(const std::string& path, Polarity polarity, const std::string& out_path) {
    LoadOptions load;
    load.polarity = polarity;
    const auto balanced = oversample(load_dataset(path, load), globals_.seed);
    if (out_path.empty()) {
      write_dataset(out_, balanced, polarity);
    } else {
      save_dataset(out_path, balanced, polarity);
      const auto s = stats(balanced);
      err_ << "wrote " << s.total << " samples (" << s.clean_count << " clean, " << s.buggy_count << " buggy) to "
           << out_path << "\n";
    }
    return kExitOk;
  }

  int cmd_dataset_split(const std::string& path, Polarity polarity, double fraction, const std::string& train_out,
                        const std::string& eval_out) {
    LoadOptions load;
    load.polarity = polarity;
    const auto parts = split(load_dataset(path, load), fraction, globals_.seed);
    save_dataset(train_out, parts.train, polarity);
    save_dataset(eval_out, parts.eval, polarity);
    out_ << "train " << parts.train.size() << " -> " << train_out << "\neval " << parts.eval.size() << " -> "
         << eval_out << "\n";
    return kExitOk;
  }

  int cmd_catalog_show(const std::vector<std::string>& categories, const std::string& format) {
    if (format == "json") {
      out_ << map_to_json(map_);
      return kExitOk;
    }
    std::optional<std::set<Category>> filter;
    if (!categories.empty()) {
      filter.emplace();
      for (const auto& c : categories) filter->insert(category_from_string(c));
    }
    out_ << render_context(map_, filter);
    return kExitOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Globals globals_;
  FileConfig config_;
  KnowledgeMap map_ = default_map();
};

inline void use_stderr_logger() {
  if (!spdlog::get("symreview")) spdlog::set_default_logger(spdlog::stderr_color_mt("symreview"));
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  use_stderr_logger();
  App app(out, err);
  return app.run(argc, argv);
}

}  // namespace symreview::cli
