#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmilab/runner.hpp"

namespace {

using Json = nlohmann::ordered_json;

// Flag values are parsed as JSON when they look like JSON (numbers, booleans,
// arrays, objects) and kept as strings otherwise.
Json flag_value(const std::string& text) {
  auto j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || j.is_string()) return text;
  return j;
}

struct Flags {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

void add_value(CLI::App* app, Flags& f, const std::string& name, const std::string& help) {
  app->add_option("--" + name, f.values[name], help);
}

void add_switch(CLI::App* app, Flags& f, const std::string& name, const std::string& help) {
  app->add_flag("--" + name, f.switches[name], help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale experiments on quantum key agreement in the random oracle model"};
  app.require_subcommand(1);
  std::map<std::string, Flags> flags;
  std::string config_path;

  auto common = [&](CLI::App* sub) {
    auto& f = flags[sub->get_name()];
    sub->add_option("--config", config_path, "JSON configuration file; flags override its keys");
    add_value(sub, f, "seed", "root seed (required)");
    add_value(sub, f, "out", "report path, '-' for stdout");
    add_value(sub, f, "format", "json or csv");
    return &f;
  };
  auto attack_flags = [&](CLI::App* sub, Flags& f) {
    add_value(sub, f, "protocol", "built-in protocol name");
    add_value(sub, f, "params", "protocol parameters as a JSON object");
    add_value(sub, f, "n", "oracle input length");
    add_value(sub, f, "attack", "repeat, keygen, short-sk or auto");
    add_value(sub, f, "reps", "heavy-query samples per copy");
    add_value(sub, f, "eps", "heavy-query threshold parameter");
    add_value(sub, f, "grid", "rotation grid lo:step:hi or list");
    add_value(sub, f, "sampled_trials", "sampled modified-Bob comparison runs");
    add_value(sub, f, "max_rounds", "coordinate-descent rounds of the short-key attack");
  };

  auto* lemmas = app.add_subcommand("lemmas", "randomized checks of the CMI helper lemmas");
  auto* lf = common(lemmas);
  add_value(lemmas, *lf, "trials", "trials per check");
  add_value(lemmas, *lf, "t", "number of permutation-invariant blocks");

  auto* attack = app.add_subcommand("attack", "run one attack on a built-in protocol");
  auto* af = common(attack);
  attack_flags(attack, *af);
  add_value(attack, *af, "t", "copies held by Eve");
  add_value(attack, *af, "C", "set t = ceil(C d e) when --t is absent");

  auto* sweep = app.add_subcommand("sweep", "run an attack over several copy counts");
  auto* sf = common(sweep);
  attack_flags(sweep, *sf);
  add_value(sweep, *sf, "t_values", "copy counts, e.g. 1,2,4 or 1..8");
  add_value(sweep, *sf, "C_values", "constants C with t = ceil(C d e)");

  auto* walk = app.add_subcommand("walk", "XOR random-walk identities and analytic bounds");
  auto* wf = common(walk);
  add_switch(walk, *wf, "f-bound", "sweep f(p) against 8p/t and 8e^-t (default)");
  add_switch(walk, *wf, "tanh", "sweep the auxiliary arctanh bound");
  add_switch(walk, *wf, "cmi", "walk entropies and CMI series for given components");
  add_switch(walk, *wf, "parity", "Poisson parity closed form against its series");
  add_value(walk, *wf, "t", "t values, e.g. 2..64 or 2,3,5");
  add_value(walk, *wf, "p-grid", "p grid lo:step:hi");
  add_value(walk, *wf, "q-grid", "q grid lo:step:hi");
  add_value(walk, *wf, "n", "oracle input length for --cmi");
  add_value(walk, *wf, "components", "per-query step distributions as JSON");
  add_value(walk, *wf, "t-max", "largest t for --cmi");
  add_value(walk, *wf, "mu", "Poissonization parameter, at least 2");
  add_value(walk, *wf, "lambda", "lambda values for --parity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmilab::kExitInvalid;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Json config = Json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    const auto parsed = in ? Json::parse(in, nullptr, false) : Json(nullptr);
    if (!in || parsed.is_discarded() || !parsed.is_object()) {
      std::cerr << "cannot read configuration object from '" << config_path << "'\n";
      return cmilab::kExitInvalid;
    }
    config = parsed;
  }
  config["command"] = chosen->get_name();
  auto key = [](std::string name) {
    std::replace(name.begin(), name.end(), '-', '_');
    return name;
  };
  const auto& f = flags[chosen->get_name()];
  for (const auto& [name, value] : f.values)
    if (chosen->count("--" + name) > 0) config[key(name)] = name == "protocol" || name == "out" || name == "format" || name == "attack"
                                                                   ? Json(value)
                                                                   : flag_value(value);
  for (const auto& [name, on] : f.switches)
    if (on) config[key(name)] = true;
  return cmilab::run_and_emit(config);
}
