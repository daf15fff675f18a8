#include "ssdg/report.hpp"

#include <cstdio>
#include <sstream>

namespace ssdg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string field;
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::string report_render(const SuiteReport& report, const std::string& format) {
  if (format == "csv") {
    std::string out = "method,seed";
    for (const auto& t : report.task_names) out += "," + t;
    out += ",avg\n";
    if (report.task_names.empty()) return out;  // empty report: header only
    for (size_t s = 0; s < report.seeds.size(); ++s) {
      out += report.mode + "," + std::to_string(report.seeds[s]);
      double sum = 0;
      for (size_t t = 0; t < report.task_names.size(); ++t) {
        out += "," + fmt(report.per_seed[t][s]);
        sum += report.per_seed[t][s];
      }
      out += "," + fmt(sum / static_cast<double>(report.task_names.size())) + "\n";
    }
    out += report.mode + ",mean";
    for (const double a : report.task_accuracy) out += "," + fmt(a);
    out += "," + fmt(report.average) + "\n";
    return out;
  }
  if (format == "markdown-table") {
    // method + one column per task + Avg
    std::string out = "| method |";
    for (const auto& t : report.task_names) out += " " + t + " |";
    out += " Avg |\n|";
    for (size_t i = 0; i < report.task_names.size() + 2; ++i) out += " --- |";
    out += "\n| " + report.mode + " |";
    for (const double a : report.task_accuracy) out += " " + pct(a) + " |";
    out += " " + pct(report.average) + " |\n";
    return out;
  }
  throw ConfigError("report_render: unknown format '" + format +
                    "' (expected csv or markdown-table)");
}

SuiteReport parse_suite_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("suite csv: empty input");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "method" || header[1] != "seed" ||
      header.back() != "avg")
    throw std::runtime_error("suite csv: bad header");
  SuiteReport report;
  report.task_names.assign(header.begin() + 2, header.end() - 1);
  if (report.task_names.empty()) return report;
  std::vector<std::vector<double>> seed_rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("suite csv: row width mismatch");
    report.mode = fields[0];
    std::vector<double> accs;
    for (size_t i = 2; i + 1 < fields.size(); ++i) accs.push_back(std::stod(fields[i]));
    if (fields[1] == "mean") {
      report.task_accuracy = accs;
      report.average = std::stod(fields.back());
    } else {
      report.seeds.push_back(std::stoull(fields[1]));
      seed_rows.push_back(accs);
    }
  }
  report.per_seed.assign(report.task_names.size(),
                         std::vector<double>(report.seeds.size(), 0.0));
  for (size_t s = 0; s < seed_rows.size(); ++s)
    for (size_t t = 0; t < report.task_names.size(); ++t)
      report.per_seed[t][s] = seed_rows[s][t];
  if (report.task_accuracy.empty())
    throw std::runtime_error("suite csv: missing mean row");
  return report;
}

}  // namespace ssdg
