#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "schema_check.hpp"
#include "test_util.hpp"
#include "toptune/report.hpp"

namespace toptune {
namespace {

nlohmann::json load_json(const std::string& path) {
  return nlohmann::json::parse(read_file_bytes(path));
}

ComparisonReport table_report(double band = 2.5) {
  return compare(parse_top_results(load_json(TOPTUNE_TEST_DATA "/table1_top.json")),
                 parse_baselines(load_json(TOPTUNE_TEST_DATA "/table1_baseline.json")), band);
}

ComparisonReport one_row() {
  return compare({{"Beans", 93.3, 10.0}}, {{"Beans", 92.3, 1163.0, "tag"}});
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1, std::vector<std::string>(1));
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        rows.back().back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        rows.back().back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      rows.back().emplace_back();
    } else if (c == '\n') {
      rows.emplace_back(1);
    } else {
      rows.back().back() += c;
    }
  }
  if (rows.back().size() == 1 && rows.back()[0].empty()) rows.pop_back();
  return rows;
}

TEST(DeltaAcc, ReferenceRows) {
  EXPECT_NEAR(compute_delta_acc(99.9, 99.8), 0.10, 1e-9);
  EXPECT_NEAR(compute_delta_acc(70.8, 67.9), 2.90, 1e-9);
  EXPECT_EQ(compute_delta_acc(55.5, 55.5), 0.0);
}

TEST(DeltaAcc, RejectsOutOfRange) {
  EXPECT_THROW(compute_delta_acc(100.1, 50.0), ValidationError);
  EXPECT_THROW(compute_delta_acc(50.0, -0.1), ValidationError);
  EXPECT_THROW(compute_delta_acc(std::nan(""), 50.0), ValidationError);
}

TEST(Speedup, Basic) {
  EXPECT_EQ(compute_speedup(100.0, 10.0), 10.0);
  EXPECT_EQ(compute_speedup(3.5, 3.5), 1.0);
  EXPECT_NEAR(compute_speedup(2 * 3600.0, 10 * 60.0), 12.0, 1e-12);  // ~2 h vs ~10 min
}

TEST(Speedup, RejectsNonPositive) {
  EXPECT_THROW(compute_speedup(0.0, 1.0), ValidationError);
  EXPECT_THROW(compute_speedup(1.0, -2.0), ValidationError);
}

TEST(Aggregate, SingleValue) {
  const std::vector<double> s = {10.0};
  const std::vector<double> d = {1.0};
  const auto a = aggregate_stats(s, d, 2.5);
  EXPECT_EQ(a.mean_speedup, 10.0);
  EXPECT_EQ(a.std_speedup, 0.0);
  EXPECT_EQ(a.sample_std_speedup, 0.0);
  EXPECT_EQ(a.frac_within_band, 1.0);
}

TEST(Aggregate, BothStdConventions) {
  const std::vector<double> s = {2, 4, 4, 4, 5, 5, 7, 9};
  const std::vector<double> d = {0};
  const auto a = aggregate_stats(s, d, 2.5);
  EXPECT_DOUBLE_EQ(a.mean_speedup, 5.0);
  EXPECT_DOUBLE_EQ(a.std_speedup, 2.0);
  EXPECT_DOUBLE_EQ(a.sample_std_speedup, std::sqrt(32.0 / 7.0));
}

TEST(Aggregate, BandBoundaryIsInclusive) {
  const std::vector<double> s = {1.0};
  const std::vector<double> d = {2.5, -2.5, 2.51, 0.0, 70.8 - 67.9 - 0.4};
  const auto a = aggregate_stats(s, d, 2.5);
  EXPECT_EQ(a.within_band, 4u);
}

TEST(Aggregate, ZeroBandCountsExactTies) {
  const std::vector<double> s = {1.0};
  const std::vector<double> d = {0.0, 0.1, -0.1, 0.0};
  EXPECT_EQ(aggregate_stats(s, d, 0.0).within_band, 2u);
}

TEST(Aggregate, EmptyThrows) {
  const std::vector<double> one = {1.0};
  EXPECT_THROW(aggregate_stats({}, one, 2.5), ValidationError);
  EXPECT_THROW(aggregate_stats(one, {}, 2.5), ValidationError);
}

TEST(Compare, ReferenceTableAggregates) {
  const ComparisonReport r = table_report();
  ASSERT_EQ(r.rows.size(), 32u);
  EXPECT_NEAR(r.aggregate.mean_speedup, 84.64, 0.5);
  EXPECT_NEAR(r.aggregate.std_speedup, 38.97, 0.5);
  EXPECT_NEAR(r.aggregate.frac_within_band, 0.60, 1.0 / 32 + 1e-12);
}

TEST(Compare, RowArithmetic) {
  const ComparisonReport r = table_report();
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.delta_acc, row.acc_top - row.acc_fine, 1e-9);
    EXPECT_EQ(row.speedup, row.time_fine_s / row.time_top_s);
  }
  EXPECT_EQ(r.rows.front().dataset, "AFHQ");
  EXPECT_NEAR(r.rows.front().delta_acc, 0.1, 1e-9);
  EXPECT_EQ(r.rows.front().speedup, 94.7);
}

TEST(Compare, RowsFollowTopOrder) {
  const auto r = compare({{"b", 50, 1}, {"a", 60, 2}}, {{"a", 50, 4, "t"}, {"b", 40, 3, "t"}});
  EXPECT_EQ(r.rows[0].dataset, "b");
  EXPECT_EQ(r.rows[1].dataset, "a");
  EXPECT_EQ(r.rows[1].speedup, 2.0);
}

TEST(Compare, DisjointNamesRejected) {
  EXPECT_THROW(compare({{"x", 50, 1}}, {{"y", 50, 1, "t"}}), ValidationError);
  EXPECT_THROW(compare({{"x", 50, 1}, {"y", 50, 1}}, {{"x", 50, 1, "t"}}), ValidationError);
  EXPECT_THROW(compare({{"x", 50, 1}, {"x", 50, 1}}, {{"x", 50, 1, "t"}}), ValidationError);
}

TEST(Parse, ObjectArrayAndResultsWrapper) {
  const nlohmann::json one = {{"dataset", "d"}, {"acc_top_percent", 90.0}, {"time_top_s", 2.0}};
  EXPECT_EQ(parse_top_results(one).size(), 1u);
  EXPECT_EQ(parse_top_results(nlohmann::json::array({one, one})).size(), 2u);
  EXPECT_EQ(parse_top_results(nlohmann::json{{"results", {one}}}).size(), 1u);
}

TEST(Parse, MissingOrMistypedKeys) {
  EXPECT_THROW(parse_top_results(nlohmann::json{{"dataset", "d"}, {"time_top_s", 1.0}}), FormatError);
  EXPECT_THROW(parse_baselines(nlohmann::json{{"dataset", "d"},
                                              {"acc_fine_percent", "high"},
                                              {"time_fine_s", 1.0},
                                              {"protocol_tag", "t"}}),
               FormatError);
  EXPECT_THROW(parse_baselines(nlohmann::json(3)), FormatError);
}

TEST(Parse, TimeMustBeSumOfConfigTimes) {
  nlohmann::json doc = {{"dataset", "d"},
                        {"acc_top_percent", 90.0},
                        {"time_top_s", 3.0},
                        {"configs", {{{"wall_time_s", 1.0}}, {{"wall_time_s", 2.0}}}}};
  EXPECT_NO_THROW(parse_top_results(doc));
  doc["time_top_s"] = 2.5;
  EXPECT_THROW(parse_top_results(doc), ValidationError);
}

TEST(Render, OneRowMarkdownTable) {
  const std::string md = render_report(one_row(), ReportFormat::markdown);
  std::istringstream in(md);
  std::vector<std::string> table;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] == '|') table.push_back(line);
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0], "| Dataset | ΔAcc | SpUp |");
  EXPECT_EQ(table[2], "| Beans | +1.00% | 116.30× |");
}

TEST(Render, ExtendedMarkdownAddsAbsoluteColumns) {
  const std::string md = render_report(one_row(), ReportFormat::markdown, true);
  EXPECT_NE(md.find("| Dataset | ΔAcc | SpUp | Acc top | Acc fine |"), std::string::npos);
  EXPECT_NE(md.find("| 93.3 | 92.3 |"), std::string::npos);
}

TEST(Render, CsvRoundTrip) {
  ComparisonReport r = table_report();
  r.rows[1].dataset = "comma, \"quoted\" name";
  const auto rows = parse_csv(render_report(r, ReportFormat::csv, true));
  ASSERT_EQ(rows.size(), r.rows.size() + 1);
  EXPECT_EQ(rows[0][0], "dataset");
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& f = rows[i + 1];
    ASSERT_EQ(f.size(), 8u);
    EXPECT_EQ(f[0], r.rows[i].dataset);
    EXPECT_EQ(std::stod(f[1]), r.rows[i].delta_acc);
    EXPECT_EQ(std::stod(f[2]), r.rows[i].speedup);
    EXPECT_EQ(std::stod(f[3]), r.rows[i].acc_top);
    EXPECT_EQ(std::stod(f[6]), r.rows[i].time_fine_s);
  }
}

TEST(Render, JsonMatchesDocumentedSchema) {
  const auto schema = load_json(TOPTUNE_DOCS_DIR "/report.schema.json");
  const auto doc = nlohmann::json::parse(render_report(table_report(), ReportFormat::json));
  const auto errors = testing::schema_errors(schema, doc);
  EXPECT_TRUE(errors.empty()) << errors.front();
  EXPECT_EQ(doc["schema"], kReportSchemaId);
  EXPECT_EQ(doc["rows"].size(), 32u);
}

TEST(Render, SchemaCheckerCatchesViolations) {
  const auto schema = load_json(TOPTUNE_DOCS_DIR "/report.schema.json");
  auto doc = report_json(one_row());
  doc["rows"][0].erase("speedup");
  EXPECT_FALSE(testing::schema_errors(schema, doc).empty());
  doc = report_json(one_row());
  doc["aggregate"]["frac_within_band"] = 1.5;
  EXPECT_FALSE(testing::schema_errors(schema, doc).empty());
  doc = report_json(one_row());
  doc["extra"] = 1;
  EXPECT_FALSE(testing::schema_errors(schema, doc).empty());
}

TEST(Render, EmitWritesFile) {
  testing::TempDir dir;
  emit_report(one_row(), ReportFormat::json, dir / "r.json");
  EXPECT_EQ(load_json((dir / "r.json").string())["rows"][0]["dataset"], "Beans");
}

TEST(Render, UnknownFormat) {
  EXPECT_THROW(parse_report_format("xml"), ValidationError);
  EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
}

}  // namespace
}  // namespace toptune
