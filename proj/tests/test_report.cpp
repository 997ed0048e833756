#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmilab/errors.hpp"
#include "cmilab/report.hpp"
#include "cmilab/runner.hpp"

using namespace cmilab;
using Json = nlohmann::ordered_json;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else cell.push_back(ch);
    }
    cells.push_back(cell);
    out.push_back(cells);
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> keys_of(const Json& j) {
  std::vector<std::string> k;
  for (auto it = j.begin(); it != j.end(); ++it) k.push_back(it.key());
  return k;
}

}  // namespace

TEST_CASE("number rounding") {
  const Json j = {{"a", 0.1 + 0.2}, {"b", 3}, {"c", {1.0 / 3, "x"}}, {"d", {{"e", 2.0 / 3}}}};
  const auto r = round_numbers(j);
  CHECK(r["a"].get<double>() == 0.3);
  CHECK(r["b"].is_number_integer());
  CHECK(r["c"][0].get<double>() == 0.333333333333);
  CHECK(r["c"][1] == "x");
  CHECK(r["d"]["e"].get<double>() == 0.666666666667);
  CHECK(keys_of(r) == keys_of(j));
}

TEST_CASE("JSON and CSV serialization") {
  const Json j = {{"z", 1}, {"a", 2}};
  const auto text = serialize_json(j);
  CHECK(text.back() == '\n');
  CHECK(text.find("\"z\"") < text.find("\"a\""));

  SUBCASE("an empty table is header only") {
    CHECK(serialize_csv(CsvTable{{"t", "p", "value"}, {}}) == "t,p,value\n");
  }
  SUBCASE("rows round-trip through a parser") {
    CsvTable t{{"i", "x", "label"}, {}};
    for (int i = 0; i < 100; ++i) t.rows.push_back({i, i / 7.0, i % 3 == 0 ? Json("a,b") : Json("plain")});
    const auto rows = parse_csv(serialize_csv(t));
    REQUIRE(rows.size() == 101);
    CHECK(rows[0] == std::vector<std::string>{"i", "x", "label"});
    for (int i = 0; i < 100; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i) + 1];
      REQUIRE(r.size() == 3);
      CHECK(std::stoi(r[0]) == i);
      CHECK(std::stod(r[1]) == doctest::Approx(i / 7.0).epsilon(1e-11));
      CHECK(r[2] == (i % 3 == 0 ? "a,b" : "plain"));
    }
  }
  SUBCASE("ragged rows are rejected") {
    CHECK_THROWS_AS(serialize_csv(CsvTable{{"a", "b"}, {{1}}}), ValidationError);
  }
  CHECK(report_format_from_string("csv") == ReportFormat::csv);
  CHECK_THROWS_AS(report_format_from_string("xml"), ValidationError);
  CHECK(error_object("validation", "bad") == Json{{"kind", "validation"}, {"message", "bad"}});
}

TEST_CASE("file output") {
  const auto dir = std::filesystem::temp_directory_path() / "cmilab_report_test";
  std::filesystem::create_directories(dir);
  write_text("hello\n", (dir / "a.txt").string());
  CHECK(read_file(dir / "a.txt") == "hello\n");
  const auto missing = (dir / "no_such_dir" / "b.txt").string();
  try {
    write_text("x", missing);
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(missing) != std::string::npos);
    CHECK(std::string(e.kind()) == "io");
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("sequence parsing") {
  CHECK(parse_int_sequence("2..64") == std::vector<int>{2, 4, 8, 16, 32, 64});
  CHECK(parse_int_sequence("1,3,5") == std::vector<int>{1, 3, 5});
  CHECK(parse_int_sequence("7") == std::vector<int>{7});
  CHECK_THROWS_AS(parse_int_sequence("a"), ValidationError);
  const auto g = parse_real_grid("0:0.25:1");
  REQUIRE(g.size() == 5);
  CHECK(g[4] == doctest::Approx(1));
  CHECK(parse_real_grid("0.5,1.5") == std::vector<double>{0.5, 1.5});
  CHECK_THROWS_AS(parse_real_grid("1:0:2"), ValidationError);
}

TEST_CASE("runner envelope and exit codes") {
  SUBCASE("lemmas pass") {
    const auto out = run_experiment({{"command", "lemmas"}, {"trials", 20}, {"seed", 7}});
    CHECK(out.exit_code == kExitPass);
    CHECK(keys_of(out.report) == std::vector<std::string>{"schema", "command", "config", "results", "errors", "exit_code"});
    CHECK(out.report["schema"] == kReportSchema);
    CHECK(out.report["results"].size() == 4);
    CHECK(out.table.rows.size() == 4);
  }
  SUBCASE("missing seed is invalid") {
    const auto out = run_experiment({{"command", "lemmas"}, {"trials", 20}});
    CHECK(out.exit_code == kExitInvalid);
    REQUIRE(out.report["errors"].size() == 1);
    CHECK(out.report["errors"][0]["kind"] == "validation");
  }
  SUBCASE("unknown command and protocol are invalid") {
    CHECK(run_experiment({{"command", "bogus"}, {"seed", 1}}).exit_code == kExitInvalid);
    CHECK(run_experiment({{"command", "attack"}, {"protocol", "nope"}, {"seed", 1}}).exit_code == kExitInvalid);
  }
  SUBCASE("attack report") {
    const auto out = run_experiment(
        {{"command", "attack"}, {"protocol", "toy-qpke"}, {"t", 4}, {"reps", 24}, {"eps", 0.05}, {"seed", 1}});
    CHECK(out.exit_code == kExitPass);
    CHECK(out.report["results"]["attack_name"] == "classical_keygen");
    CHECK(out.report["results"]["key_match_prob"].get<double>() >= 0.8);
    for (const auto& b : out.report["results"]["bounds"]) CHECK_FALSE(b["anchor"].get<std::string>().empty());
  }
  SUBCASE("a failed bound exits with 1") {
    const auto out = run_experiment(
        {{"command", "attack"}, {"protocol", "toy-qpke"}, {"t", 2}, {"reps", 1}, {"eps", 0.001}, {"seed", 1}});
    CHECK(out.exit_code == kExitBoundFailure);
    CHECK(out.report["errors"].empty());
  }
  SUBCASE("walk bound table") {
    const auto out = run_experiment({{"command", "walk"}, {"t", "2..64"}, {"p_grid", "0:0.05:1"}, {"seed", 1}});
    CHECK(out.exit_code == kExitPass);
    CHECK(out.table.rows.size() == 6 * 21);
    CHECK(std::find(out.table.header.begin(), out.table.header.end(), "max_ratio") != out.table.header.end());
  }
  SUBCASE("sweep cells") {
    const auto out = run_experiment(
        {{"command", "sweep"}, {"protocol", "parity-ka"}, {"t_values", "1,2"}, {"grid", "0"}, {"seed", 3}});
    CHECK(out.exit_code == kExitPass);
    CHECK(out.report["results"]["cells"].size() == 2);
    const auto c = run_experiment(
        {{"command", "sweep"}, {"protocol", "parity-ka"}, {"C_values", "0.5"}, {"grid", "0"}, {"seed", 3}});
    CHECK(c.report["results"]["cells"][0]["t"] == 1);
  }
}

TEST_CASE("identical configurations give byte-identical reports") {
  const auto dir = std::filesystem::temp_directory_path() / "cmilab_determinism_test";
  std::filesystem::create_directories(dir);
  for (const auto& fmt : {"json", "csv"}) {
    Json config = {{"command", "attack"}, {"protocol", "example2"}, {"attack", "keygen"}, {"t", 2}, {"reps", 8},
                   {"seed", 11}, {"format", fmt}, {"out", (dir / "report").string()}};
    CHECK(run_and_emit(config) == kExitPass);
    const auto first = read_file(dir / "report");
    CHECK(run_and_emit(config) == kExitPass);
    CHECK(read_file(dir / "report") == first);
    CHECK_FALSE(first.empty());
  }
  std::filesystem::remove_all(dir);
}
