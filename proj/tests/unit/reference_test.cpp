#include "unit.hpp"

using namespace symreview;

TEST(Reference, BundledCsvMatchesGoldenRows) {
  std::istringstream bundled(support::slurp(support::data_file("published_tables.csv")));
  std::istringstream generated(reference::published_csv());
  const auto a = parse_table_csv(bundled);
  const auto b = parse_table_csv(generated);
  ASSERT_EQ(a.size(), 12u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_DOUBLE_EQ(a[i].precision, b[i].precision);
    EXPECT_DOUBLE_EQ(a[i].recall, b[i].recall);
    EXPECT_DOUBLE_EQ(a[i].f1, b[i].f1);
  }
}

TEST(Reference, QuotedImprovementsRecompute) {
  for (const auto& q : reference::kQuotedImprovements) {
    const double computed = relative_improvement(reference::row(ScenarioKind::BaseOneShot, q.model).accuracy,
                                                 reference::row(q.scenario, q.model).accuracy);
    EXPECT_NEAR(computed, q.percent, 0.02) << to_string(q.scenario) << " " << q.model;
  }
}

TEST(Reference, ReportMentionsRoundedClaim) {
  const auto report = reference::arithmetic_report();
  EXPECT_NE(report.find("few-shot mean improvement: 11.10%"), std::string::npos) << report;
  EXPECT_NE(report.find("hybrid mean improvement:   15.29%"), std::string::npos) << report;
  EXPECT_NE(report.find("16%"), std::string::npos);
  EXPECT_NE(report.find("discrepancy 0.71 pp"), std::string::npos);
}

TEST(Reference, UnknownRow) {
  EXPECT_ERROR_KIND(reference::row(ScenarioKind::Hybrid, "PLBART"), ErrorKind::Lookup);
}
