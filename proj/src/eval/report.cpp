#include "xpcg/eval/report.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "xpcg/error.hpp"

namespace xpcg::eval {
namespace {

constexpr const char* kPlusMinus = "±";

nlohmann::json test_to_json(const RankTestResult& t) {
  return {{"test", t.test},         {"statistic", t.statistic}, {"p_value", t.p_value},
          {"exact", t.exact},       {"zero_differences", t.zero_differences},
          {"effective_n", t.effective_n}};
}

RankTestResult test_from_json(const nlohmann::json& j) {
  RankTestResult t;
  t.test = j.at("test").get<std::string>();
  t.statistic = j.at("statistic").get<double>();
  t.p_value = j.at("p_value").get<double>();
  t.exact = j.at("exact").get<bool>();
  t.zero_differences = j.at("zero_differences").get<bool>();
  t.effective_n = j.at("effective_n").get<int>();
  return t;
}

std::vector<std::string> split_columns(const std::string& line) {
  // Columns are separated by runs of two or more spaces.
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !(line[j] == ' ' && (j + 1 >= line.size() || line[j + 1] == ' '))) ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw validation_error("MalformedTable", "bad number '" + s + "'");
  return v;
}

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width - std::min(width, display_width(s)), ' ');
}

}  // namespace

Cell make_cell(std::string metric, std::vector<double> values) {
  Cell c;
  c.metric = std::move(metric);
  c.values = std::move(values);
  const auto ms = mean_std(c.values);
  c.mean = ms.mean;
  c.std = ms.std;
  return c;
}

const Cell* Row::find(const std::string& metric) const {
  for (const auto& c : cells) {
    if (c.metric == metric) return &c;
  }
  return nullptr;
}

const Row* ExperimentReport::find(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return &r;
  }
  return nullptr;
}

double ExperimentReport::mean(const std::string& variant, const std::string& metric) const {
  const Row* r = find(variant);
  const Cell* c = r ? r->find(metric) : nullptr;
  if (c == nullptr) throw Error(ErrorKind::NotFound, "NotFound", "no " + metric + " for " + variant);
  return c->mean;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
      cells.push_back({{"metric", c.metric}, {"mean", c.mean}, {"std", c.std}, {"values", c.values}});
    }
    rows_j.push_back({{"variant", r.variant}, {"cells", cells}});
  }
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : comparisons) {
    comps.push_back({{"a", c.a}, {"b", c.b}, {"metric", c.metric}, {"result", test_to_json(c.test)}});
  }
  nlohmann::json checks_j = nlohmann::json::array();
  for (const auto& c : checks) checks_j.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"experiment", experiment}, {"parameters", parameters}, {"rows", rows_j}, {"comparisons", comps},
          {"checks", checks_j},       {"warnings", warnings},     {"details", details}};
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.parameters = j.value("parameters", nlohmann::json::object());
    for (const auto& row : j.at("rows")) {
      Row out{row.at("variant").get<std::string>(), {}};
      for (const auto& c : row.at("cells")) {
        Cell cell;
        cell.metric = c.at("metric").get<std::string>();
        cell.values = c.at("values").get<std::vector<double>>();
        cell.mean = c.at("mean").get<double>();
        cell.std = c.at("std").get<double>();
        out.cells.push_back(std::move(cell));
      }
      r.rows.push_back(std::move(out));
    }
    for (const auto& c : j.value("comparisons", nlohmann::json::array())) {
      r.comparisons.push_back({c.at("a").get<std::string>(), c.at("b").get<std::string>(),
                               c.at("metric").get<std::string>(), test_from_json(c.at("result"))});
    }
    for (const auto& c : j.value("checks", nlohmann::json::array())) {
      r.checks.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(), c.value("detail", "")});
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
    r.details = j.value("details", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("MalformedReport", e.what());
  }
  return r;
}

ExperimentReport recompute(const ExperimentReport& report) {
  ExperimentReport out = report;
  for (auto& row : out.rows) {
    for (auto& cell : row.cells) cell = make_cell(cell.metric, cell.values);
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string render_table(const ExperimentReport& report) {
  std::vector<std::string> metrics;
  for (const auto& r : report.rows) {
    for (const auto& c : r.cells) {
      if (std::find(metrics.begin(), metrics.end(), c.metric) == metrics.end()) metrics.push_back(c.metric);
    }
  }
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"variant"});
  grid.back().insert(grid.back().end(), metrics.begin(), metrics.end());
  for (const auto& r : report.rows) {
    std::vector<std::string> line{r.variant};
    for (const auto& m : metrics) {
      const Cell* c = r.find(m);
      line.push_back(c ? format_number(c->mean) + kPlusMinus + format_number(c->std) : "-");
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> widths(metrics.size() + 1, 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], display_width(line[i]));
  }
  std::ostringstream out;
  out << report.experiment << '\n';
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t i = 0; i < line.size(); ++i) text += (i ? "  " : "") + pad(line[i], widths[i]);
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  }
  for (const auto& c : report.comparisons) {
    out << '\n' << c.a << " vs " << c.b << " (" << c.metric << "): " << c.test.test << " p=" << format_number(c.test.p_value)
        << (c.test.exact ? " exact" : " normal") << (c.test.zero_differences ? " zero-differences" : "");
  }
  if (!report.comparisons.empty()) out << '\n';
  for (const auto& c : report.checks) out << '\n' << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail;
  if (!report.checks.empty()) out << '\n';
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::vector<TableCell> parse_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // title
  std::getline(in, line);
  const auto header = split_columns(line);
  if (header.empty() || header[0] != "variant") throw validation_error("MalformedTable", "missing header row");
  std::vector<TableCell> out;
  while (std::getline(in, line) && !line.empty()) {
    const auto cols = split_columns(line);
    for (std::size_t i = 1; i < cols.size() && i < header.size(); ++i) {
      if (cols[i] == "-") continue;
      const auto sep = cols[i].find(kPlusMinus);
      if (sep == std::string::npos) throw validation_error("MalformedTable", "cell without mean/std: " + cols[i]);
      out.push_back({cols[0], header[i], parse_number(cols[i].substr(0, sep)),
                     parse_number(cols[i].substr(sep + std::string(kPlusMinus).size()))});
    }
  }
  return out;
}

}  // namespace xpcg::eval
