#include "cmilab/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace cmilab {

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ValidationError("unknown report format '" + s + "'");
}

namespace {

std::string format_double(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string csv_cell(const nlohmann::ordered_json& c) {
  if (c.is_null()) return "";
  if (c.is_number_float()) return format_double(c.get<double>(), kReportDigits);
  if (c.is_string()) {
    const auto s = c.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  return c.dump();
}

}  // namespace

nlohmann::ordered_json round_numbers(const nlohmann::ordered_json& j, int digits) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) return format_double(v, digits);
    return std::stod(format_double(v, digits));
  }
  if (j.is_array()) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& e : j) out.push_back(round_numbers(e, digits));
    return out;
  }
  if (j.is_object()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [k, v] : j.items()) out[k] = round_numbers(v, digits);
    return out;
  }
  return j;
}

std::string serialize_json(const nlohmann::ordered_json& report) { return round_numbers(report).dump(2) + "\n"; }

std::string serialize_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) out += (i ? "," : "") + csv_cell(table.header[i]);
  out += "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw ValidationError("CSV row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
    out += "\n";
  }
  return out;
}

void write_text(const std::string& text, const std::string& path) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    if (!std::cout) throw IoError("failed to write report to stdout");
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  f.close();
  if (!f) throw IoError("failed to write '" + path + "'");
}

void emit_report(const nlohmann::ordered_json& report, const CsvTable& table, ReportFormat format,
                 const std::string& path) {
  write_text(format == ReportFormat::json ? serialize_json(report) : serialize_csv(table), path);
}

nlohmann::ordered_json error_object(const std::string& kind, const std::string& message) {
  return {{"kind", kind}, {"message", message}};
}

}  // namespace cmilab
