#include "unit.hpp"

using namespace symreview;
using symreview::testing::sample;

namespace {

std::vector<CodeSample> mini() { return load_dataset(support::data_file("mini.jsonl")); }

RunRecord record_with(std::string id, ScenarioKind kind, std::string backend, double accuracy,
                      std::string digest = "d") {
  RunRecord r;
  r.run_id = std::move(id);
  r.scenario = ScenarioConfig::for_kind(kind);
  r.backend = std::move(backend);
  r.metrics.accuracy = accuracy;
  r.dataset_digest = std::move(digest);
  return r;
}

// Succeeds for the first `limit` calls, then reports the endpoint as gone.
class FailingBackend final : public Backend {
 public:
  explicit FailingBackend(std::size_t limit) : limit_(limit) {}
  Verdict classify(const PromptBundle&, const SampleContext& s) override {
    if (calls_.fetch_add(1) >= limit_) throw Error(ErrorKind::BackendUnavailable, "stub went away");
    return Verdict{s.gold, "x", 0.0, ParseMode::Exact};
  }
  std::string descriptor() const override { return "failing"; }
  std::size_t max_parallel() const override { return 1; }

 private:
  std::size_t limit_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace

TEST(Metrics, HandComputedMatrix) {
  // tp=3 fp=1 fn=2 tn=4: P=3/4, R=3/5, F1=2/3, accuracy=7/10.
  const auto m = compute_metrics(ConfusionMatrix{3, 1, 2, 4});
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
}

TEST(Metrics, ZeroDenominatorsGiveZero) {
  const auto no_positives = compute_metrics(ConfusionMatrix{0, 0, 0, 5});
  EXPECT_EQ(no_positives.precision, 0.0);
  EXPECT_EQ(no_positives.recall, 0.0);
  EXPECT_EQ(no_positives.f1, 0.0);
  EXPECT_EQ(no_positives.accuracy, 1.0);
  EXPECT_ERROR_KIND(compute_metrics(ConfusionMatrix{}), ErrorKind::EmptyRun);
}

TEST(Metrics, UnparsedCountsAsWrong) {
  ConfusionMatrix cm;
  cm.add(Label::Buggy, std::nullopt);
  cm.add(Label::Clean, std::nullopt);
  EXPECT_EQ(cm, (ConfusionMatrix{0, 1, 1, 0}));
}

TEST(Metrics, RelativeImprovement) {
  EXPECT_DOUBLE_EQ(relative_improvement(0.5, 0.6), 20.0);
  EXPECT_DOUBLE_EQ(relative_improvement(0.5, 0.4), -20.0);
  EXPECT_ERROR_KIND(relative_improvement(0.0, 0.5), ErrorKind::UndefinedBaseline);
}

TEST(Run, EchoInvertAlwaysOracle) {
  const auto data = mini();
  const auto map = default_map();
  const auto scenario = ScenarioConfig::for_kind(ScenarioKind::Hybrid);
  MockBackend echo(MockMode::EchoGold), invert(MockMode::InvertGold), always(MockMode::AlwaysBuggy),
      oracle(MockMode::FindingsOracle);
  EXPECT_EQ(run_scenario(data, scenario, echo, map, 1).metrics.accuracy, 1.0);
  EXPECT_EQ(run_scenario(data, scenario, invert, map, 1).metrics.accuracy, 0.0);
  const auto all = run_scenario(data, scenario, always, map, 1);
  EXPECT_EQ(all.metrics.recall, 1.0);
  EXPECT_NEAR(all.metrics.precision, stats(data).buggy_ratio, 1e-9);
  // Hand-labeled in the dataset: 12 detectable bugs, 4 logic bugs no rule
  // covers, 3 clean snippets that trip a Defect rule, 21 clean snippets.
  EXPECT_EQ(run_scenario(data, scenario, oracle, map, 1).confusion, (ConfusionMatrix{12, 3, 4, 21}));
}

TEST(Run, RowsFollowDatasetOrderRegardlessOfParallelism) {
  const auto data = mini();
  MockBackend oracle(MockMode::FindingsOracle);
  RunOptions serial;
  serial.max_parallel = 1;
  RunOptions wide;
  wide.max_parallel = 8;
  const auto a = run_scenario(data, ScenarioConfig::for_kind(ScenarioKind::FewShot), oracle, default_map(), 3, serial);
  const auto b = run_scenario(data, ScenarioConfig::for_kind(ScenarioKind::FewShot), oracle, default_map(), 3, wide);
  ASSERT_EQ(a.rows.size(), data.size());
  ASSERT_EQ(b.rows.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(a.rows[i].sample_id, data[i].id);
    EXPECT_TRUE(a.rows[i].same_outcome(b.rows[i]));
  }
  EXPECT_TRUE(reconciles(a));
  EXPECT_TRUE(a.complete);
  EXPECT_EQ(a.dataset_digest, dataset_digest(data));
}

TEST(Run, UnparsedVerdictsAreCountedNotFatal) {
  std::vector<CodeSample> data{sample(1, Label::Buggy, "a = 1\n"), sample(2, Label::Clean, "b = 2\n"),
                               sample(3, Label::Clean, "c = 3\n")};
  MockBackend canned(std::map<std::string, std::string>{{"1", "buggy"}, {"2", "hmm"}, {"3", "clean"}});
  const auto r = run_scenario(data, ScenarioConfig::for_kind(ScenarioKind::FineTunedDirect), canned, default_map(), 0);
  EXPECT_EQ(r.metrics.unparsed_count, 1u);
  EXPECT_EQ(r.confusion, (ConfusionMatrix{1, 1, 0, 1}));
  EXPECT_EQ(r.rows[1].parse_mode, ParseMode::Fallback);
}

TEST(Run, OverBudgetSampleBecomesErrorRow) {
  std::vector<CodeSample> data{sample(1, Label::Buggy, std::string(9000, 'x')), sample(2, Label::Clean, "b = 2\n")};
  MockBackend echo(MockMode::EchoGold);
  const auto r = run_scenario(data, ScenarioConfig::for_kind(ScenarioKind::FineTunedDirect), echo, default_map(), 0);
  EXPECT_FALSE(r.rows[0].error.empty());
  EXPECT_FALSE(r.rows[0].predicted.has_value());
  EXPECT_EQ(r.metrics.unparsed_count, 1u);
  EXPECT_EQ(r.confusion, (ConfusionMatrix{0, 0, 1, 1}));
}

TEST(Run, BackendLossAbortsWithPartialRecord) {
  support::TempDir dir;
  const auto data = mini();
  FailingBackend backend(5);
  RunOptions options;
  options.run_id = "partial";
  options.output_dir = dir.path();
  try {
    run_scenario(data, ScenarioConfig::for_kind(ScenarioKind::FineTunedDirect), backend, default_map(), 0, options);
    FAIL() << "expected the run to abort";
  } catch (const RunAborted& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendUnavailable);
    EXPECT_FALSE(e.partial().complete);
    EXPECT_EQ(e.partial().rows.size(), 5u);
  }
  const auto persisted = read_run_record(dir / "partial.json");
  EXPECT_FALSE(persisted.complete);
  EXPECT_EQ(persisted.rows.size(), 5u);
  EXPECT_TRUE(reconciles(persisted));
}

TEST(Run, EmptyDataset) {
  MockBackend echo(MockMode::EchoGold);
  EXPECT_ERROR_KIND(run_scenario({}, ScenarioConfig::for_kind(ScenarioKind::Hybrid), echo, default_map(), 0),
                    ErrorKind::EmptyRun);
}

TEST(Records, WriteReadRoundTrip) {
  support::TempDir dir;
  MockBackend oracle(MockMode::FindingsOracle);
  RunOptions options;
  options.run_id = "rt";
  options.output_dir = dir.path();
  options.dataset_path = "mini.jsonl";
  options.fine_tune = FineTuneProfile{};
  const auto r = run_scenario(mini(), ScenarioConfig::for_kind(ScenarioKind::Hybrid), oracle, default_map(), 9, options);
  const auto back = read_run_record(record_path(dir.path(), "rt"));
  EXPECT_EQ(back.run_id, r.run_id);
  EXPECT_EQ(back.scenario, r.scenario);
  EXPECT_EQ(back.backend, r.backend);
  EXPECT_EQ(back.fine_tune, r.fine_tune);
  EXPECT_EQ(back.dataset_digest, r.dataset_digest);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_DOUBLE_EQ(back.metrics.f1, r.metrics.f1);
  ASSERT_EQ(back.rows.size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) EXPECT_TRUE(back.rows[i].same_outcome(r.rows[i]));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "rt.rows.jsonl"));
}

TEST(Records, ReadMissing) { EXPECT_ERROR_KIND(read_run_record("/nonexistent/run.json"), ErrorKind::Io); }

TEST(Compare, ImprovementOverBaseline) {
  const std::vector<RunRecord> runs{record_with("base", ScenarioKind::BaseOneShot, "m", 0.539),
                                    record_with("few", ScenarioKind::FewShot, "m", 0.642)};
  const auto table = compare_runs(runs, "base");
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_TRUE(table.rows[0].is_baseline);
  EXPECT_NEAR(table.rows[1].accuracy_improvement_pct, 19.11, 0.005);
  const auto text = format_table(table);
  EXPECT_NE(text.find("+19.11%"), std::string::npos) << text;
  EXPECT_NE(text.find("mean accuracy improvement: 19.11%"), std::string::npos);
  EXPECT_NE(format_csv(table).find(",19.11\n"), std::string::npos);
}

TEST(Compare, Errors) {
  const std::vector<RunRecord> mixed{record_with("a", ScenarioKind::BaseOneShot, "m", 0.5, "d1"),
                                     record_with("b", ScenarioKind::FewShot, "m", 0.6, "d2")};
  EXPECT_ERROR_KIND(compare_runs(mixed, "a"), ErrorKind::IncomparableRuns);
  const std::vector<RunRecord> same{record_with("a", ScenarioKind::BaseOneShot, "m", 0.5)};
  EXPECT_ERROR_KIND(compare_runs(same, "zzz"), ErrorKind::Lookup);
  const std::vector<RunRecord> zero{record_with("a", ScenarioKind::BaseOneShot, "m", 0.0)};
  EXPECT_ERROR_KIND(compare_runs(zero, "a"), ErrorKind::UndefinedBaseline);
}

TEST(Compare, PerBackendBaselines) {
  const std::vector<RunRecord> runs{
      record_with("t5-base", ScenarioKind::BaseOneShot, "t5", 0.587),
      record_with("t5-few", ScenarioKind::FewShot, "t5", 0.593),
      record_with("bert-base", ScenarioKind::BaseOneShot, "bert", 0.531),
      record_with("bert-few", ScenarioKind::FewShot, "bert", 0.601),
  };
  const auto table = compare_runs_by_backend(runs, ScenarioKind::BaseOneShot);
  EXPECT_EQ(table.rows[1].baseline_id, "t5-base");
  EXPECT_EQ(table.rows[3].baseline_id, "bert-base");
  EXPECT_NEAR(table.rows[1].accuracy_improvement_pct, 1.02, 0.005);
  EXPECT_NEAR(table.rows[3].accuracy_improvement_pct, 13.18, 0.005);
  ASSERT_TRUE(table.mean_improvement_pct);
  EXPECT_NEAR(*table.mean_improvement_pct, (100.0 * 0.006 / 0.587 + 100.0 * 0.070 / 0.531) / 2.0, 1e-9);
  EXPECT_ERROR_KIND(compare_runs_by_backend(runs, ScenarioKind::Hybrid), ErrorKind::Lookup);
}

TEST(Consistency, FlagsOnlyRowsOutsideTolerance) {
  const auto flags = table_consistency_check({{"ok", 0.75, 0.6, 0.667}, {"off", 0.75, 0.6, 0.6}});
  EXPECT_FALSE(flags[0].flagged);
  EXPECT_TRUE(flags[1].flagged);
  EXPECT_NEAR(flags[1].delta, 2.0 / 3.0 - 0.6, 1e-12);
}

TEST(Consistency, CsvFormats) {
  std::istringstream labeled("# comment\nlabel,p,r,f1,acc\nA,0.5,0.5,0.5,0.9\n\nB,0.1,0.2,0.3,0.4\n");
  const auto rows = parse_table_csv(labeled);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, "A");
  EXPECT_DOUBLE_EQ(rows[1].f1, 0.3);
  std::istringstream bare("0.5,0.5,0.5\n0.2,0.4,0.3\n");
  const auto bare_rows = parse_table_csv(bare);
  ASSERT_EQ(bare_rows.size(), 2u);
  EXPECT_EQ(bare_rows[0].label, "row 1");
  std::istringstream bad("a,b,c\n0.1,x,0.3\n");
  EXPECT_ERROR_KIND(parse_table_csv(bad), ErrorKind::Parse);
  std::istringstream short_line("0.1,0.2\n");
  EXPECT_ERROR_KIND(parse_table_csv(short_line), ErrorKind::Parse);
}
