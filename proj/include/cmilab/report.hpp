#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cmilab/errors.hpp"

namespace cmilab {

inline constexpr const char* kReportSchema = "cmilab.report/1";
inline constexpr int kReportDigits = 12;

enum class ReportFormat { json, csv };
ReportFormat report_format_from_string(const std::string& s);

// Cells are JSON scalars: numbers print with 12 significant digits, strings
// are quoted when they contain a comma, quote or newline.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<nlohmann::ordered_json>> rows;
};

// Every floating-point leaf rounded to `digits` significant digits.
nlohmann::ordered_json round_numbers(const nlohmann::ordered_json& j, int digits = kReportDigits);

std::string serialize_json(const nlohmann::ordered_json& report);
std::string serialize_csv(const CsvTable& table);

// Writes to `path`, or to stdout when path is "-". I/O failures raise IoError
// naming the path.
void write_text(const std::string& text, const std::string& path);
void emit_report(const nlohmann::ordered_json& report, const CsvTable& table, ReportFormat format,
                 const std::string& path);

nlohmann::ordered_json error_object(const std::string& kind, const std::string& message);

}  // namespace cmilab
