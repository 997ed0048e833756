#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmilab/circuit.hpp"
#include "cmilab/protocols.hpp"
#include "cmilab/recovery.hpp"

namespace cmilab {

// One asserted inequality in a report, named by the result it instantiates.
struct BoundCheck {
  std::string anchor;
  std::string quantity;
  double value = 0;
  double bound = 0;
  bool pass = false;
};

BoundCheck check_le(std::string anchor, std::string quantity, double value, double bound);

struct AttackReport {
  std::string attack_name;
  nlohmann::ordered_json params;
  std::int64_t queries_used = 0;
  double cmi_achieved = 0;
  double recovery_td = 0;
  double fr_bound = 0;
  std::optional<double> key_match_prob;
  std::optional<double> support_violation_rate;
  std::vector<BoundCheck> bounds;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();

  bool bound_satisfied() const;
  nlohmann::ordered_json to_json() const;
};

// ---------------------------------------------------------------- query weights

struct QueryWeightProfile {
  std::map<std::uint64_t, double> weights;  // q_x
  int d = 0;
  double total() const;
};

struct HeavySet {
  double threshold = 0;
  std::set<std::uint64_t> members;
};

// q_x summed over the circuit's work queries (outputs excluded), from the
// pre-query input marginals of every path.
QueryWeightProfile exact_query_weights(const QueryCircuit& c, const OracleFunction& h, const Vector& input,
                                       const ClassicalContext& ctx = {});

// Per-query input marginals: entry i is the distribution of the input register
// just before query i.
std::vector<std::vector<double>> query_input_marginals(const QueryCircuit& c, const OracleFunction& h,
                                                       const Vector& input, const ClassicalContext& ctx = {});

HeavySet heavy_set(const QueryWeightProfile& profile, double eps);  // threshold eps^2 / d^2

// Step 2 of the modified Bob: `reps` times pick a query index uniformly,
// measure the input register there, and record the classical answer.
QueryRecord modified_bob_sample(const QueryCircuit& bob, const OracleFunction& h, const Vector& input,
                                const ClassicalContext& ctx, int reps, std::uint64_t seed);
// Same, for a protocol: samples the oracle and the first message from `seed`.
QueryRecord modified_bob_sample(const ProtocolSpec& spec, int reps, std::uint64_t seed);

// Per-run defaults of the classical-keygen attack; d is Bob's query count.
int default_heavy_reps(int d, double eps);          // ceil(3 d^2 (log2 d + log2 1/eps))
int default_copy_count(int d, int n, double eps);   // ceil(2 d n / eps^2)
int heavy_lemma_copy_count(int d, int n, double eps);  // ceil(d n / eps^2)

struct BobInstance {
  OracleFunction h;
  Vector input;
  ClassicalContext ctx;
};

struct CoverageResult {
  int trials = 0;
  int successes = 0;
  double rate = 0;
  double wilson_lower = 0;
  int reps = 0;
  int copies = 0;
  double mean_heavy_size = 0;
  bool pass = false;  // wilson_lower >= 1 - eps
};

// Empirical Pr[W_B subset of In_E] where In_E collects copies * reps samples.
CoverageResult heavy_query_coverage(const QueryCircuit& bob, const std::function<BobInstance(Rng&)>& instance,
                                    int reps, int copies, double eps, int trials, std::uint64_t seed);
CoverageResult heavy_query_coverage(const ProtocolSpec& spec, int reps, int copies, double eps, int trials,
                                    std::uint64_t seed);

double wilson_lower_bound(int successes, int trials, double z = 1.959963984540054);

struct BbbvResult {
  double lhs = 0;  // || psi_d(h) - psi_d(h2) ||
  double rhs = 0;  // 2 sqrt(d) sqrt(sum of q_x over differing x)
  bool holds() const { return lhs <= rhs + 1e-9; }
};

// The circuit must be measurement-free so both runs are single pure paths.
BbbvResult bbbv_check(const QueryCircuit& c, const OracleFunction& h, const OracleFunction& h2, const Vector& input,
                      const ClassicalContext& ctx = {});

// ---------------------------------------------------------------- attacks

struct RepeatOptions {
  int t = 4;
  std::vector<double> grid = default_rotation_grid();
};

// Non-interactive protocols: Eve repeats Alice's query phase. Two-round
// protocols with a query-free second Alice stage: Eve repeats Bob on m1.
// Either way she reconstructs Alice from her copies and the transcript.
AttackReport eve_repeat_and_recover(const ProtocolSpec& spec, const RepeatOptions& opt = {});

struct KeygenOptions {
  int t = 4;
  int reps = 24;
  double eps = 0.05;
  std::vector<double> grid = default_rotation_grid();
  std::uint64_t seed = 0;
  int sampled_trials = 200;  // sampled modified-Bob runs compared against the exact In_E law
};

// Classical-keygen attack: copies of Bob on m1 with heavy-query sampling,
// recovery of Alice's first-stage view, computational-basis readout, and
// the second Alice stage on the reprogrammed oracle. Baselines run the same
// fake views on (a) a uniformly random oracle consistent with the fake
// record and (b) the real oracle.
AttackReport eve_classical_keygen(const ProtocolSpec& spec, const KeygenOptions& opt = {});

struct ShortSkOptions {
  int t = 3;
  std::vector<double> grid = default_rotation_grid();
  int max_rounds = 4;
};

// Short-secret-key attack: copies of Bob plus, for every secret-key value,
// copies of the second Alice stage run with that key; coordinate-descent
// prefix selection; recovery of Bob from Eve's register.
AttackReport eve_short_sk(const ProtocolSpec& spec, const ShortSkOptions& opt = {});

}  // namespace cmilab
