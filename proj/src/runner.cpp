#include "cmilab/runner.hpp"

#include <algorithm>
#include <iostream>
#include <cmath>
#include <sstream>

#include "cmilab/attacks.hpp"
#include "cmilab/lemmas.hpp"
#include "cmilab/protocols.hpp"
#include "cmilab/xorwalk.hpp"

namespace cmilab {

std::vector<int> parse_int_sequence(const std::string& text) {
  std::vector<int> out;
  try {
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots)), hi = std::stoi(text.substr(dots + 2));
      if (lo < 1 || hi < lo) throw ValidationError("range '" + text + "' needs 1 <= lo <= hi");
      for (long v = lo; v <= hi; v *= 2) out.push_back(static_cast<int>(v));
      return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse integer sequence '" + text + "'");
  }
  if (out.empty()) throw ValidationError("empty integer sequence");
  return out;
}

std::vector<double> parse_real_grid(const std::string& text) {
  try {
    if (text.find(':') != std::string::npos) {
      std::stringstream ss(text);
      std::string a, b, c;
      std::getline(ss, a, ':');
      std::getline(ss, b, ':');
      std::getline(ss, c, ':');
      if (c.empty()) throw ValidationError("grid '" + text + "' must be lo:step:hi");
      return linear_grid(std::stod(a), std::stod(b), std::stod(c));
    }
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw ValidationError("empty grid");
    return out;
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse grid '" + text + "'");
  }
}

namespace {

using Json = nlohmann::ordered_json;

// Typed access to the flat config with defaults.
class Config {
 public:
  explicit Config(const Json& j) : j_(j) {
    if (!j_.is_object()) throw ValidationError("configuration must be a JSON object");
  }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

  std::string str(const std::string& k, const std::string& def) const {
    if (!has(k)) return def;
    const auto& v = j_.at(k);
    if (!v.is_string()) throw ValidationError("'" + k + "' must be a string");
    return v.get<std::string>();
  }
  std::int64_t integer(const std::string& k, std::int64_t def) const {
    if (!has(k)) return def;
    const auto& v = j_.at(k);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<std::int64_t>(v.get<double>());
    throw ValidationError("'" + k + "' must be an integer");
  }
  double real(const std::string& k, double def) const {
    if (!has(k)) return def;
    const auto& v = j_.at(k);
    if (!v.is_number()) throw ValidationError("'" + k + "' must be a number");
    return v.get<double>();
  }
  bool flag(const std::string& k) const {
    if (!has(k)) return false;
    const auto& v = j_.at(k);
    if (!v.is_boolean()) throw ValidationError("'" + k + "' must be true or false");
    return v.get<bool>();
  }
  std::vector<int> ints(const std::string& k, const std::vector<int>& def) const {
    if (!has(k)) return def;
    const auto& v = j_.at(k);
    if (v.is_number_integer()) return {v.get<int>()};
    if (v.is_string()) return parse_int_sequence(v.get<std::string>());
    if (v.is_array()) {
      std::vector<int> out;
      for (const auto& e : v) {
        if (!e.is_number_integer()) throw ValidationError("'" + k + "' entries must be integers");
        out.push_back(e.get<int>());
      }
      return out;
    }
    throw ValidationError("'" + k + "' must be an integer sequence");
  }
  std::vector<double> reals(const std::string& k, const std::vector<double>& def) const {
    if (!has(k)) return def;
    const auto& v = j_.at(k);
    if (v.is_number()) return {v.get<double>()};
    if (v.is_string()) return parse_real_grid(v.get<std::string>());
    if (v.is_array()) {
      std::vector<double> out;
      for (const auto& e : v) {
        if (!e.is_number()) throw ValidationError("'" + k + "' entries must be numbers");
        out.push_back(e.get<double>());
      }
      return out;
    }
    throw ValidationError("'" + k + "' must be a number sequence");
  }
  const Json& raw(const std::string& k) const { return j_.at(k); }

 private:
  const Json& j_;
};

std::uint64_t seed_of(const Config& c) {
  if (!c.has("seed")) throw ValidationError("a seed is required");
  const auto s = c.integer("seed", 0);
  if (s < 0) throw ValidationError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

int positive(std::int64_t v, const std::string& name) {
  if (v < 1 || v > 1000000) throw ValidationError("'" + name + "' must be in [1, 1000000]");
  return static_cast<int>(v);
}

Json table_rows_json(const CsvTable& t) {
  auto rows = Json::array();
  for (const auto& r : t.rows) {
    Json o = Json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) o[t.header[i]] = r[i];
    rows.push_back(o);
  }
  return rows;
}

// ---------------------------------------------------------------- lemmas

void run_lemmas(const Config& c, RunOutcome& out) {
  const int trials = positive(c.integer("trials", 200), "trials");
  const int t = static_cast<int>(c.integer("t", 4));
  const auto results = run_lemma_suite(trials, seed_of(c), t);
  auto arr = Json::array();
  out.table.header = {"lemma_id", "trials", "max_violation", "tolerance", "pass"};
  bool pass = true;
  for (const auto& r : results) {
    arr.push_back(r.to_json());
    out.table.rows.push_back({r.lemma_id, r.trials, r.max_violation, r.tolerance, r.pass});
    pass = pass && r.pass;
  }
  out.report["results"] = arr;
  out.exit_code = pass ? kExitPass : kExitBoundFailure;
}

// ---------------------------------------------------------------- attacks

std::string resolve_attack(const std::string& requested, const ProtocolSpec& spec) {
  if (requested != "auto") {
    if (requested != "repeat" && requested != "keygen" && requested != "short-sk")
      throw ValidationError("unknown attack '" + requested + "' (repeat, keygen, short-sk, auto)");
    return requested;
  }
  switch (spec.kind) {
    case ProtocolKind::qpke_short_sk: return "short-sk";
    case ProtocolKind::qpke_classical_keygen: return "keygen";
    case ProtocolKind::qpke_quantum_pk: return "keygen";
    default: return "repeat";
  }
}

struct AttackCell {
  std::string attack;
  int t = 0;
  std::optional<double> c_const;
};

// t from an explicit value, else from t = ceil(C d e) with d the largest
// per-stage query count and e the query width.
int copies_from_constant(const ProtocolSpec& spec, double c_const) {
  if (!(c_const > 0)) throw ValidationError("C must be positive");
  const int d = std::max({spec.alice_pre.query_count(), spec.bob_pre.query_count(), spec.alice_post.query_count(), 1});
  return static_cast<int>(std::ceil(c_const * d * spec.query_width()));
}

AttackReport run_attack(const ProtocolSpec& spec, const Config& c, const AttackCell& cell, std::uint64_t seed) {
  const auto grid = c.reals("grid", default_rotation_grid());
  if (cell.attack == "repeat") {
    RepeatOptions o;
    o.t = cell.t;
    o.grid = grid;
    return eve_repeat_and_recover(spec, o);
  }
  if (cell.attack == "keygen") {
    KeygenOptions o;
    o.t = cell.t;
    o.grid = grid;
    o.reps = positive(c.integer("reps", o.reps), "reps");
    o.eps = c.real("eps", o.eps);
    o.seed = seed;
    o.sampled_trials = static_cast<int>(c.integer("sampled_trials", o.sampled_trials));
    return eve_classical_keygen(spec, o);
  }
  ShortSkOptions o;
  o.t = cell.t;
  o.grid = grid;
  o.max_rounds = positive(c.integer("max_rounds", o.max_rounds), "max_rounds");
  return eve_short_sk(spec, o);
}

ProtocolSpec protocol_of(const Config& c) {
  if (!c.has("protocol")) throw ValidationError("'protocol' is required (one of the built-in names)");
  nlohmann::json params = nlohmann::json::object();
  if (c.has("params")) {
    const auto& p = c.raw("params");
    params = p.is_string() ? nlohmann::json::parse(p.get<std::string>(), nullptr, false) : nlohmann::json::parse(p.dump());
    if (params.is_discarded() || !params.is_object()) throw ValidationError("'params' must be a JSON object");
  }
  if (c.has("n")) params["n"] = c.integer("n", 1);
  return make_protocol(c.str("protocol", ""), params);
}

void run_attack_command(const Config& c, RunOutcome& out) {
  const auto spec = protocol_of(c);
  AttackCell cell;
  cell.attack = resolve_attack(c.str("attack", "auto"), spec);
  if (c.has("t")) {
    cell.t = static_cast<int>(c.integer("t", 0));
  } else if (c.has("C")) {
    cell.c_const = c.real("C", 1);
    cell.t = copies_from_constant(spec, *cell.c_const);
  } else {
    cell.t = cell.attack == "short-sk" ? ShortSkOptions{}.t : RepeatOptions{}.t;
  }
  const auto r = run_attack(spec, c, cell, seed_of(c));
  out.report["results"] = r.to_json();
  out.table.header = {"attack", "t", "queries_used", "cmi_achieved", "recovery_td", "fr_bound", "key_match_prob",
                      "bound_satisfied"};
  out.table.rows.push_back({r.attack_name, cell.t, r.queries_used, r.cmi_achieved, r.recovery_td, r.fr_bound,
                            r.key_match_prob ? Json(*r.key_match_prob) : Json(), r.bound_satisfied()});
  out.exit_code = r.bound_satisfied() ? kExitPass : kExitBoundFailure;
}

void run_sweep(const Config& c, RunOutcome& out) {
  const auto spec = protocol_of(c);
  const auto attack = resolve_attack(c.str("attack", "auto"), spec);
  std::vector<AttackCell> cells;
  if (c.has("C_values")) {
    for (double k : c.reals("C_values", {})) cells.push_back({attack, copies_from_constant(spec, k), k});
  } else {
    for (int t : c.ints("t_values", {1, 2, 3, 4})) cells.push_back({attack, t, std::nullopt});
  }
  const auto seed = seed_of(c);
  out.table.header = {"index", "C", "t", "queries_used", "cmi_achieved", "recovery_td", "fr_bound", "key_match_prob",
                      "bound_satisfied"};
  auto arr = Json::array();
  bool pass = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    const auto r = run_attack(spec, c, cell, derive_seed(seed, i));
    arr.push_back({{"index", i}, {"C", cell.c_const ? Json(*cell.c_const) : Json()}, {"t", cell.t},
                   {"report", r.to_json()}});
    out.table.rows.push_back({i, cell.c_const ? Json(*cell.c_const) : Json(), cell.t, r.queries_used, r.cmi_achieved,
                              r.recovery_td, r.fr_bound, r.key_match_prob ? Json(*r.key_match_prob) : Json(),
                              r.bound_satisfied()});
    pass = pass && r.bound_satisfied();
  }
  out.report["results"] = {{"attack", attack}, {"cells", arr}};
  out.exit_code = pass ? kExitPass : kExitBoundFailure;
}

// ---------------------------------------------------------------- walk

double truncated_parity_series(double lambda, int terms) {
  double term = std::exp(-lambda), s = 0;
  for (int k = 1; k <= terms; ++k) {
    term *= lambda / k;
    if (k % 2) s += term;
  }
  return s;
}

void run_walk(const Config& c, RunOutcome& out) {
  seed_of(c);
  const std::string mode = c.flag("tanh") ? "tanh" : c.flag("cmi") ? "cmi" : c.flag("parity") ? "parity" : "f-bound";
  bool pass = true;
  Json results = {{"mode", mode}};
  if (mode == "f-bound") {
    const auto ts = c.ints("t", {2, 4, 8, 16, 32, 64});
    const auto grid = c.reals("p_grid", linear_grid(0, 0.01, 10));
    const auto sweep = f_bound_sweep(ts, grid);
    std::map<int, double> max_ratio;
    for (const auto& r : sweep.rows) max_ratio[r.t] = std::max(max_ratio[r.t], r.ratio);
    out.table.header = {"t", "p", "value", "bound", "ratio", "max_ratio"};
    for (const auto& r : sweep.rows) out.table.rows.push_back({r.t, r.p, r.value, r.bound, r.ratio, max_ratio[r.t]});
    results["constant"] = kWalkBoundConstant;
    results["max_ratio_linear"] = sweep.max_ratio_linear;
    results["max_ratio_exponential"] = sweep.max_ratio_exponential;
    results["rows"] = sweep.rows.size();
    results["pass"] = sweep.pass;
    pass = sweep.pass;
  } else if (mode == "tanh") {
    const auto ts = c.ints("t", {2, 4, 8, 16, 32, 64});
    const auto grid = c.reals("q_grid", linear_grid(0, 0.01, 0.99));
    const auto sweep = tanh_bound_sweep(ts, grid);
    out.table.header = {"t", "q", "value", "bound", "ratio"};
    double worst = 0;
    for (const auto& r : sweep.rows) {
      out.table.rows.push_back({r.t, r.q, r.value, r.bound, r.value / r.bound});
      worst = std::max(worst, r.value / r.bound);
    }
    results["max_ratio"] = worst;
    results["pass"] = sweep.pass;
    pass = sweep.pass;
  } else if (mode == "cmi") {
    XorStepDistribution steps;
    steps.n = static_cast<int>(c.integer("n", 1));
    if (!c.has("components")) throw ValidationError("walk --cmi needs 'components'");
    auto comps = c.raw("components");
    if (comps.is_string()) comps = Json::parse(comps.get<std::string>(), nullptr, false);
    if (comps.is_discarded() || !comps.is_array()) throw ValidationError("'components' must be a JSON array of arrays");
    for (const auto& row : comps) {
      std::vector<double> v;
      for (const auto& e : row) v.push_back(e.get<double>());
      steps.components.push_back(v);
    }
    const int t_max = positive(c.integer("t_max", 8), "t_max");
    const double mu = c.real("mu", 2);
    std::vector<int> ts;
    for (int t = 0; t <= t_max + 2; ++t) ts.push_back(t);
    const auto exact = walk_entropy_series(steps, ts).values;
    const auto pois = poissonized_entropy_series(steps, ts, mu).values;
    out.table.header = {"t", "entropy", "walk_cmi", "poissonized_entropy", "poissonized_cmi"};
    for (int t = 0; t <= t_max; ++t)
      out.table.rows.push_back({t, exact.at(t), 2 * exact.at(t + 1) - exact.at(t) - exact.at(t + 2), pois.at(t),
                                2 * pois.at(t + 1) - pois.at(t) - pois.at(t + 2)});
    results["expected_poissonized_queries_per_copy"] = poissonized_expected_queries(steps, 1, mu);
  } else {
    const auto lambdas = c.reals("lambda", {0.1, 0.5, 1, 2, 5});
    out.table.header = {"lambda", "closed_form", "series", "abs_diff"};
    double worst = 0;
    for (double l : lambdas) {
      const int terms = static_cast<int>(std::ceil(l + 10 * std::sqrt(l))) + 40;
      const double a = parity_of_poisson(l), b = truncated_parity_series(l, terms);
      out.table.rows.push_back({l, a, b, std::abs(a - b)});
      worst = std::max(worst, std::abs(a - b));
    }
    results["max_abs_diff"] = worst;
    results["pass"] = worst <= 1e-10;
    pass = worst <= 1e-10;
  }
  results["table"] = table_rows_json(out.table);
  out.report["results"] = results;
  out.exit_code = pass ? kExitPass : kExitBoundFailure;
}

}  // namespace

RunOutcome run_experiment(const Json& config) {
  RunOutcome out;
  out.report["schema"] = kReportSchema;
  out.report["command"] = config.is_object() && config.contains("command") ? config.at("command") : Json();
  out.report["config"] = config;
  out.report["results"] = Json();
  try {
    const Config c(config);
    const auto command = c.str("command", "");
    if (command == "lemmas") run_lemmas(c, out);
    else if (command == "attack") run_attack_command(c, out);
    else if (command == "sweep") run_sweep(c, out);
    else if (command == "walk") run_walk(c, out);
    else throw ValidationError("unknown command '" + command + "' (lemmas, attack, sweep, walk)");
    out.report["errors"] = Json::array();
  } catch (const Error& e) {
    out.exit_code = kExitInvalid;
    out.report["errors"] = Json::array({error_object(e.kind(), e.what())});
    out.table = CsvTable{{"error_kind", "message"}, {{e.kind(), e.what()}}};
  }
  out.report["exit_code"] = out.exit_code;
  return out;
}

int run_and_emit(const Json& config) {
  auto out = run_experiment(config);
  try {
    const Config c(config);
    emit_report(out.report, out.table, report_format_from_string(c.str("format", "json")), c.str("out", "-"));
  } catch (const Error& e) {
    out.report["errors"].push_back(error_object(e.kind(), e.what()));
    out.report["exit_code"] = kExitInvalid;
    std::cerr << serialize_json(out.report);
    return kExitInvalid;
  }
  return out.exit_code;
}

}  // namespace cmilab
