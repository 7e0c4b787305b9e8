#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "xpcg/eval/rank_tests.hpp"
#include "xpcg/eval/stats.hpp"

namespace xpcg::eval {

/// One metric of one variant: the raw values and their mean/std.
struct Cell {
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;
};

Cell make_cell(std::string metric, std::vector<double> values);

struct Row {
  std::string variant;
  std::vector<Cell> cells;
  const Cell* find(const std::string& metric) const;
};

struct Comparison {
  std::string a;
  std::string b;
  std::string metric;
  RankTestResult test;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Deterministic experiment summary. Wall-clock times live in `timings`,
/// which is kept out of to_json() so reruns compare byte-for-byte.
struct ExperimentReport {
  std::string experiment;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<Row> rows;
  std::vector<Comparison> comparisons;
  std::vector<Check> checks;
  std::vector<std::string> warnings;
  nlohmann::json details = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();

  const Row* find(const std::string& variant) const;
  /// Mean of `metric` for `variant`; throws NotFound.
  double mean(const std::string& variant, const std::string& metric) const;

  nlohmann::json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& j);
};

/// Copy with every mean/std recomputed from its stored values.
ExperimentReport recompute(const ExperimentReport& report);

/// Shortest text that parses back to exactly `v`.
std::string format_number(double v);

/// Aligned table: one row per variant, one column per metric, cells
/// "mean±std"; comparisons and checks follow as plain lines.
std::string render_table(const ExperimentReport& report);

struct TableCell {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
};

/// Reads the cells back out of render_table() output.
std::vector<TableCell> parse_table(const std::string& text);

}  // namespace xpcg::eval
