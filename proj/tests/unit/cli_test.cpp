#include "unit.hpp"

#include <cli.hpp>

#include <json.hpp>

using namespace symreview;
using symreview::testing::CliResult;

namespace {

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "symreview");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = symreview::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::string kMini = support::data_file("mini.jsonl");

}  // namespace

TEST(Cli, HelpAndBadFlags) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"analyze", "--help"}).code, 0);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"analyze", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
}

TEST(Cli, AnalyzeExitCodes) {
  support::TempDir dir;
  support::spit(dir / "bad.py", "def f(items=[]):\n    return items\n");
  support::spit(dir / "warn.py", "def area(w):\n    return w\n");
  support::spit(dir / "ok.py", "def add(left, right):\n    return left + right\n");
  EXPECT_EQ(run_cli({"analyze", dir / "bad.py"}).code, 1);
  EXPECT_EQ(run_cli({"analyze", dir / "warn.py"}).code, 0);
  const auto ok = run_cli({"analyze", dir / "ok.py"});
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "no findings\n");
  EXPECT_EQ(run_cli({"analyze", dir / "missing.py"}).code, 2);
}

TEST(Cli, AnalyzeJson) {
  support::TempDir dir;
  support::spit(dir / "bad.py", "def f(items=[]):\n    return items\n");
  const auto r = run_cli({"analyze", dir / "bad.py", "--format", "json"});
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["rule_id"], "KM-05");
  EXPECT_EQ(j[0]["line"], 1);
}

TEST(Cli, AnalyzeStrictMode) {
  support::TempDir dir;
  support::spit(dir / "broken.py", "def f(:\n    pass\n");
  EXPECT_EQ(run_cli({"analyze", dir / "broken.py"}).code, 0);
  EXPECT_EQ(run_cli({"analyze", "--strict", dir / "broken.py"}).code, 2);
}

TEST(Cli, ReviewVerdictExitCodes) {
  support::TempDir dir;
  support::spit(dir / "bad.py", "def f(items=[]):\n    return items\n");
  support::spit(dir / "ok.py", "def add(left, right):\n    return left + right\n");
  EXPECT_EQ(run_cli({"review", dir / "bad.py", "--mock", "findings-oracle"}).code, 1);
  EXPECT_EQ(run_cli({"review", dir / "ok.py", "--mock", "findings-oracle"}).code, 0);
  EXPECT_EQ(run_cli({"review", dir / "bad.py", "--mock", "echo-gold"}).code, 2);
  EXPECT_EQ(run_cli({"review", dir / "bad.py", "--mock", "findings-oracle", "--scenario", "base", "--shots", "3"}).code, 2);
  EXPECT_EQ(run_cli({"review", dir / "bad.py"}).code, 2);
  EXPECT_EQ(run_cli({"review", dir / "bad.py", "--mock", "always-buggy", "--backend-url", "http://x"}).code, 2);
}

TEST(Cli, ReviewDatasetSample) {
  // Sample 12 is a buggy logic error no rule detects.
  EXPECT_EQ(run_cli({"review", kMini, "--sample", "12", "--mock", "echo-gold"}).code, 1);
  EXPECT_EQ(run_cli({"review", kMini, "--sample", "12", "--mock", "findings-oracle"}).code, 0);
  EXPECT_EQ(run_cli({"review", kMini, "--sample", "999", "--mock", "echo-gold"}).code, 2);
  const auto r = run_cli({"review", kMini, "--sample", "3", "--mock", "echo-gold", "--format", "json"});
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["verdict"], "buggy");
  EXPECT_EQ(j["prompt"]["scenario"]["kind"], "hybrid");
}

TEST(Cli, ReviewAgainstStubServer) {
  support::StubServer server(support::StubServer::completion("clean"));
  support::TempDir dir;
  support::spit(dir / "bad.py", "def f(items=[]):\n    return items\n");
  EXPECT_EQ(run_cli({"review", dir / "bad.py", "--backend-url", server.url()}).code, 0);
  EXPECT_EQ(server.requests().size(), 1u);
}

TEST(Cli, ReviewUnreachableBackend) {
  const int port = support::closed_port();
  support::TempDir dir;
  support::spit(dir / "a.py", "x1 = 1\n");
  const auto r = run_cli({"review", dir / "a.py", "--backend-url", "http://127.0.0.1:" + std::to_string(port),
                      "--max-retries", "0"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("backend-unavailable"), std::string::npos) << r.err;
}

TEST(Cli, EvalRunAndCompare) {
  support::TempDir dir;
  const auto echo = run_cli({"eval", "run", "--dataset", kMini, "--mock", "echo-gold", "--scenario", "hybrid", "--out",
                         dir.path().string(), "--run-id", "echo"});
  EXPECT_EQ(echo.code, 0) << echo.err;
  EXPECT_NE(echo.out.find("accuracy 1.000"), std::string::npos) << echo.out;
  const auto always = run_cli({"eval", "run", "--dataset", kMini, "--mock", "always-buggy", "--scenario", "few-shot",
                           "--out", dir.path().string(), "--run-id", "always", "--format", "json"});
  EXPECT_EQ(always.code, 0);
  EXPECT_EQ(nlohmann::json::parse(always.out)["metrics"]["recall"], 1.0);

  const auto cmp = run_cli({"eval", "compare", dir / "always.json", dir / "echo.json", "--baseline", "always"});
  EXPECT_EQ(cmp.code, 0) << cmp.err;
  EXPECT_NE(cmp.out.find("+150.00%"), std::string::npos) << cmp.out;
  const auto csv = run_cli({"eval", "compare", dir / "always.json", dir / "echo.json", "--format", "csv"});
  EXPECT_TRUE(csv.out.starts_with("run_id,"));
  EXPECT_EQ(run_cli({"eval", "compare", dir / "always.json", "--baseline", "nope"}).code, 2);
}

TEST(Cli, CompareRejectsDifferentDatasets) {
  support::TempDir dir;
  ASSERT_EQ(run_cli({"eval", "run", "--dataset", kMini, "--mock", "echo-gold", "--out", dir.path().string(), "--run-id",
                 "full"})
                .code,
            0);
  ASSERT_EQ(run_cli({"eval", "run", "--dataset", kMini, "--limit", "10", "--mock", "echo-gold", "--out",
                 dir.path().string(), "--run-id", "head"})
                .code,
            0);
  const auto r = run_cli({"eval", "compare", dir / "full.json", dir / "head.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("incomparable-runs"), std::string::npos);
}

TEST(Cli, CheckTables) {
  const auto r = run_cli({"eval", "check-tables", support::data_file("published_tables.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("Table II GraphCodeBERT"), std::string::npos);
  EXPECT_NE(r.out.find("3 of 12 row(s) flagged"), std::string::npos) << r.out;
  support::TempDir dir;
  support::spit(dir / "ok.csv", "0.75,0.6,0.667\n");
  EXPECT_EQ(run_cli({"eval", "check-tables", dir / "ok.csv"}).code, 0);
}

TEST(Cli, DatasetCommands) {
  support::TempDir dir;
  const auto s = run_cli({"dataset", "stats", kMini});
  EXPECT_NE(s.out.find("buggy_ratio 0.400"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(run_cli({"dataset", "stats", kMini, "--format", "json"}).out)["total"], 40);

  ASSERT_EQ(run_cli({"dataset", "resample", kMini, "--seed", "7", "--out", dir / "a.jsonl"}).code, 0);
  ASSERT_EQ(run_cli({"--seed", "7", "dataset", "resample", kMini, "--out", dir / "b.jsonl"}).code, 0);
  EXPECT_EQ(support::slurp(dir / "a.jsonl"), support::slurp(dir / "b.jsonl"));
  EXPECT_EQ(stats(load_dataset(dir / "a.jsonl")).buggy_count, 24u);

  support::spit(dir / "one.jsonl", "{\"func\": \"x1 = 1\", \"target\": 0}\n");
  EXPECT_EQ(run_cli({"dataset", "resample", dir / "one.jsonl"}).code, 2);

  ASSERT_EQ(run_cli({"dataset", "split", kMini, "--fraction", "0.75", "--train-out", dir / "tr.jsonl", "--eval-out",
                 dir / "ev.jsonl"})
                .code,
            0);
  EXPECT_EQ(load_dataset(dir / "tr.jsonl").size(), 30u);
  EXPECT_EQ(load_dataset(dir / "ev.jsonl").size(), 10u);
  EXPECT_EQ(run_cli({"dataset", "split", kMini, "--fraction", "1.5", "--train-out", dir / "x", "--eval-out", dir / "y"}).code,
            2);
}

TEST(Cli, PromptPreview) {
  support::TempDir dir;
  const auto prefix = dir / "p";
  ASSERT_EQ(run_cli({"prompt", "preview", kMini, "--sample", "5", "--scenario", "hybrid", "--out", prefix}).code, 0);
  const auto text = support::slurp(prefix + ".txt");
  const auto sidecar = nlohmann::json::parse(support::slurp(prefix + ".json"));
  EXPECT_EQ(sidecar["chars"], text.size());
  EXPECT_EQ(sidecar["sample_id"], 5);
  EXPECT_NE(text.find(kCatalogHeader), std::string::npos);
  const auto again = run_cli({"prompt", "preview", kMini, "--sample", "5", "--scenario", "hybrid"});
  EXPECT_EQ(again.out, text + "\n");
}

TEST(Cli, ConfigAndCatalog) {
  support::TempDir dir;
  EXPECT_EQ(run_cli({"--config", support::data_file("example_config.json"), "review", kMini, "--sample", "0", "--mock",
                 "findings-oracle"})
                .code,
            1);
  support::spit(dir / "bad.json", "{\"scenario\": {\"kind\": \"zero-shot\"}}");
  EXPECT_EQ(run_cli({"--config", dir / "bad.json", "analyze", kMini}).code, 2);

  ASSERT_EQ(run_cli({"catalog", "export", "--out", dir / "map.json"}).code, 0);
  EXPECT_EQ(load_map(dir / "map.json").map.rules, default_map().rules);
  const auto shown = run_cli({"catalog", "show", "--category", "Resources"});
  EXPECT_NE(shown.out.find("KM-04"), std::string::npos);
  EXPECT_EQ(shown.out.find("KM-05"), std::string::npos);

  // A catalog without KM-05 turns the mutable-default snippet into a pass.
  auto map = default_map();
  std::erase_if(map.rules, [](const Rule& r) { return r.rule_id == "KM-05"; });
  save_map(dir / "small.json", map);
  support::spit(dir / "bad.py", "def f1(items=[]):\n    return items\n");
  EXPECT_EQ(run_cli({"--catalog", dir / "small.json", "analyze", dir / "bad.py"}).code, 0);
}

TEST(Cli, ReferenceReport) {
  const auto r = run_cli({"eval", "reference"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("19.11%"), std::string::npos);
}
