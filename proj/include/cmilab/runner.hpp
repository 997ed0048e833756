#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cmilab/report.hpp"

namespace cmilab {

// Exit codes of the experiment runner.
inline constexpr int kExitPass = 0;
inline constexpr int kExitBoundFailure = 1;
inline constexpr int kExitInvalid = 2;

struct RunOutcome {
  int exit_code = kExitPass;
  nlohmann::ordered_json report;
  CsvTable table;
};

// `config` is a flat JSON object; "command" selects lemmas, attack, sweep or
// walk and "seed" is mandatory. Library errors become an error object in the
// report with exit code 2.
RunOutcome run_experiment(const nlohmann::ordered_json& config);

// Runs and writes the report to config["out"] (default stdout) in
// config["format"] (default json). Returns the exit code.
int run_and_emit(const nlohmann::ordered_json& config);

// "2..64" doubles from 2 up to 64; "1,3,5" is a list; "7" is a single value.
std::vector<int> parse_int_sequence(const std::string& text);
// "lo:step:hi" inclusive, or a comma-separated list.
std::vector<double> parse_real_grid(const std::string& text);

}  // namespace cmilab
