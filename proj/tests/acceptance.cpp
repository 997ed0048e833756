// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <fmt/format.h>

#include "cmilab/attacks.hpp"
#include "cmilab/lemmas.hpp"
#include "cmilab/qentropy.hpp"
#include "cmilab/random_states.hpp"
#include "cmilab/recovery.hpp"
#include "cmilab/report.hpp"
#include "cmilab/runner.hpp"
#include "cmilab/xorwalk.hpp"
#include "support/circuits.hpp"
#include "support/generators.hpp"

using namespace cmilab;
using namespace testing_support;

namespace {

constexpr std::uint64_t kSeed = 20261016;

struct Outcome {
  bool pass = false;
  std::string summary;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = limit_seconds <= 0 || secs <= limit_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::string timing = fmt::format("{:.1f} s", secs);
  if (limit_seconds > 0) timing += fmt::format(" of {:.0f} s", limit_seconds);
  std::printf("criterion %2d %s  %s: %s [%s]\n", id, pass ? "PASS" : "FAIL", name.c_str(), o.summary.c_str(),
              timing.c_str());
  std::fflush(stdout);
}

Outcome lemma_suite() {
  const auto results = run_lemma_suite(200, kSeed);
  bool pass = results.size() == 4;
  std::string s;
  for (const auto& r : results) {
    pass = pass && r.pass && r.trials >= 200 && r.max_violation <= r.tolerance;
    s += fmt::format("{} {:.2e}/{:.0e}; ", r.lemma_id, r.max_violation, r.tolerance);
  }
  return {pass, s + "200 trials each"};
}

Outcome entropy_core() {
  Rng rng(derive_seed(kSeed, 2));
  constexpr double tol = 1e-9;
  double chain = 0, ssa = 0, unitary = 0, mixture = 0;
  constexpr int states = 500;
  for (int k = 0; k < states; ++k) {
    const auto layout = random_layout(rng, 3, 4, 3);
    const auto rho = random_state(layout, rng);
    const auto l = layout.labels();
    const Labels a{l[0]}, b{l[1]}, c{l[2]};
    const Labels d = l.size() > 3 ? Labels{l[3]} : Labels{};
    auto cat = [](Labels x, const Labels& y) {
      x.insert(x.end(), y.begin(), y.end());
      return x;
    };
    auto cmi = [&](const Labels& x, const Labels& y, const Labels& z) {
      return conditional_mutual_information(rho, x, y, z).value;
    };
    chain = std::max(chain, std::abs(cmi(a, cat(b, c), d) - cmi(a, c, d) - cmi(a, b, cat(c, d))));
    auto s = [&](const Labels& x) { return von_neumann_entropy(rho, x).value; };
    ssa = std::max(ssa, s(cat(cat(a, b), c)) + s(b) - s(cat(a, b)) - s(cat(b, c)));
    const Matrix u = random_unitary(layout.total_dim(), rng);
    const DensityMatrix rotated(layout, u * rho.matrix() * u.adjoint(), false);
    unitary = std::max(unitary, std::abs(s(l) - von_neumann_entropy(rotated, l).value));

    std::vector<double> p;
    std::vector<Matrix> blocks;
    const auto cq = random_cq_state(2 + rng.below(2), 2 + rng.below(2), rng, &p, &blocks);
    double rhs = shannon_entropy(p);
    for (std::size_t i = 0; i < p.size(); ++i) rhs += p[i] * von_neumann_entropy(blocks[i]);
    mixture = std::max(mixture, std::abs(von_neumann_entropy(cq, {"K", "Q"}).value - rhs));
  }
  const bool pass = chain <= tol && ssa <= tol && unitary <= tol && mixture <= tol;
  return {pass, fmt::format("{} states; chain rule {:.1e}, SSA violation {:.1e}, unitary {:.1e}, cq mixture {:.1e}",
                            states, chain, ssa, unitary, mixture)};
}

DensityMatrix markov_chain(Rng& rng) {
  const auto p = random_distribution(2, rng);
  Matrix rho = Matrix::Zero(8, 8);
  for (std::size_t e = 0; e < 2; ++e) {
    Matrix proj = Matrix::Zero(2, 2);
    proj(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e)) = 1;
    rho += p[e] * kron(kron(random_density_matrix(2, rng), proj), random_density_matrix(2, rng));
  }
  return DensityMatrix(SystemLayout({{"A", 2}, {"E", 2}, {"B", 2}}), rho);
}

Outcome recovery() {
  Rng rng(derive_seed(kSeed, 3));
  const SystemLayout l({{"A", 2}, {"E", 2}, {"B", 2}});
  constexpr int corpus = 100;
  int within = 0;
  double worst_excess = -1;
  for (int k = 0; k < corpus; ++k) {
    const auto r = best_recovery(random_state(l, rng), {"A"}, {"E"}, {"B"});
    if (r.achieved_td <= r.fr_bound + 0.05) ++within;
    else
      std::fprintf(stderr, "recovery exception: state %d td %.6f bound %.6f cmi %.6f\n", k, r.achieved_td, r.fr_bound,
                   r.cmi);
    worst_excess = std::max(worst_excess, r.achieved_td - r.fr_bound);
  }
  double worst_markov = 0;
  for (int k = 0; k < 20; ++k)
    worst_markov = std::max(worst_markov, best_recovery(markov_chain(rng), {"A"}, {"E"}, {"B"}).achieved_td);
  return {within >= 95 && worst_markov <= 1e-6,
          fmt::format("{}/{} within FR + 0.05 (max td - FR {:.3f}); Markov chains max td {:.1e}", within, corpus,
                      worst_excess, worst_markov)};
}

Outcome compressed_oracle() {
  Rng rng(derive_seed(kSeed, 4));
  double worst_mass = 0;
  for (int k = 0; k < 50; ++k) {
    const int n = 1 + static_cast<int>(rng.below(3)), d = 1 + static_cast<int>(rng.below(3));
    const auto w = fourier_support_weights(purified_run(random_query_circuit(n, d, n == 3 ? 1 : 2, rng), n));
    for (const auto& [weight, mass] : w)
      if (weight > d) worst_mass = std::max(worst_mass, mass);
  }
  double worst_overlap = 0;
  for (int k = 0; k < 20; ++k) {
    const int n = 1 + static_cast<int>(rng.below(2)), d = 1 + static_cast<int>(rng.below(2));
    const auto comps = fourier_components(purified_run(random_parallel_circuit(n, d, rng), n));
    for (auto a = comps.begin(); a != comps.end(); ++a)
      for (auto b = std::next(a); b != comps.end(); ++b)
        worst_overlap = std::max(worst_overlap, std::abs(a->second.dot(b->second)));
  }
  return {worst_mass <= 1e-9 && worst_overlap <= 1e-9,
          fmt::format("50 circuits, max mass above d {:.1e}; 20 parallel circuits, max overlap {:.1e}", worst_mass,
                      worst_overlap)};
}

Outcome hybrid_bound() {
  Rng rng(derive_seed(kSeed, 5));
  int held = 0;
  double tightest = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng.below(3)), d = 1 + static_cast<int>(rng.below(3));
    const auto c = random_query_circuit(n, d, 2, rng);
    const auto h = sample_oracle(n, rng.engine()());
    auto t = h.table();
    for (auto& bit : t)
      if (rng.uniform() < 0.3) bit ^= 1;
    const auto r = bbbv_check(c, h, OracleFunction(n, t), zero_state(c.registers));
    held += r.holds();
    if (r.rhs > 0) tightest = std::max(tightest, r.lhs / r.rhs);
  }
  return {held == 100, fmt::format("{}/100 triples, max lhs/rhs {:.3f}", held, tightest)};
}

Outcome repeat_attack() {
  const auto spec = make_protocol("parity-ka");
  const double honest = agreement_probability(spec, AgreementMethod::exact_enumeration);
  const auto r = eve_repeat_and_recover(spec, RepeatOptions{4, default_rotation_grid()});
  const double s_b = r.details["entropy_other_party"].get<double>();
  const auto pre = r.details["pre_message_cmi"].get<std::vector<double>>();
  const double min_pre = *std::min_element(pre.begin(), pre.end());
  const double cap = s_b / 5;
  const double match = r.key_match_prob.value_or(-1);
  const bool pass = std::abs(honest - 1) <= 1e-12 && match >= 1 - 2 * r.recovery_td && min_pre <= cap + 1e-8 &&
                    r.cmi_achieved <= cap + 1e-8;
  return {pass, fmt::format("honest {:.3f}, key match {:.4f}, td {:.2e}, CMI {:.2e} (min prefix {:.2e}) vs S(B)/5 = {:.4f}",
                            honest, match, r.recovery_td, r.cmi_achieved, min_pre, cap)};
}

Outcome keygen_attack() {
  KeygenOptions opt;
  opt.t = 4;
  opt.reps = 24;
  opt.eps = 0.05;
  opt.seed = kSeed;
  const auto r = eve_classical_keygen(make_protocol("toy-qpke", {{"n", 2}}), opt);
  const double match = r.key_match_prob.value_or(-1);
  const auto e2 = eve_classical_keygen(make_protocol("example2", {{"n", 2}}), opt);
  const double combined = e2.key_match_prob.value_or(-1);
  const double b1 = e2.details["baselines"]["consistent_oracle"].get<double>();
  const double b2 = e2.details["baselines"]["real_oracle"].get<double>();
  return {match >= 0.8 && b1 <= 0.6 && b2 <= 0.6,
          fmt::format("toy scheme key match {:.4f}; worked example: combined {:.4f}, baselines {:.4f} and {:.4f}",
                      match, combined, b1, b2)};
}

Outcome heavy_queries() {
  constexpr double eps = 0.05;
  constexpr int trials = 1000;
  std::string s;
  bool pass = true;
  auto report = [&](const std::string& name, const CoverageResult& c) {
    pass = pass && c.wilson_lower >= 1 - eps;
    s += fmt::format("{} {:.3f} (Wilson {:.3f}, reps {}, copies {}); ", name, c.rate, c.wilson_lower, c.reps, c.copies);
  };
  Rng setup(derive_seed(kSeed, 8));
  const auto bob = skewed_two_query_bob(setup);
  report("skewed", heavy_query_coverage(
                       bob, [&](Rng& rng) { return BobInstance{sample_oracle(2, rng.engine()()), zero_state(bob.registers), {}}; },
                       default_heavy_reps(2, eps), heavy_lemma_copy_count(2, 2, eps), eps, trials, derive_seed(kSeed, 81)));
  for (const std::string name : {"toy-qpke", "example2"}) {
    const auto spec = make_protocol(name, {{"n", 2}});
    const int d = spec.bob_pre.query_count();
    report(name, heavy_query_coverage(spec, default_heavy_reps(d, eps), heavy_lemma_copy_count(d, spec.n, eps), eps,
                                      trials, derive_seed(kSeed, 82)));
  }
  return {pass, s + fmt::format("eps {}", eps)};
}

Outcome walk_engine() {
  double worst_cmi = 0;
  const std::vector<std::pair<int, std::vector<std::vector<double>>>> cases{
      {1, {{0.5, 0.25, 0.25}}}, {1, {{0.2, 0.7, 0.1}, {0.6, 0.1, 0.3}}}, {2, {{0.4, 0.3, 0.1, 0.1, 0.1}}}};
  for (const auto& [n, comps] : cases) {
    const auto spec = make_protocol("nonadaptive", {{"n", n}, {"components", comps}});
    const auto q = eve_repeat_and_recover(spec, RepeatOptions{3, {0.0}}).details["pre_message_cmi"].get<std::vector<double>>();
    const XorStepDistribution steps{n, comps};
    for (int t = 0; t <= 3; ++t) worst_cmi = std::max(worst_cmi, std::abs(walk_cmi(steps, t) - q[static_cast<std::size_t>(t)]));
  }
  double worst_parity = 0;
  for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    double term = std::exp(-lambda), series = 0;
    for (int k = 1; k <= 80; ++k) {
      term *= lambda / k;
      if (k % 2) series += term;
    }
    worst_parity = std::max(worst_parity, std::abs(parity_of_poisson(lambda) - series));
  }
  const auto sweep = f_bound_sweep({2, 4, 8, 16, 32, 64}, linear_grid(0, 0.01, 1));
  return {worst_cmi <= 1e-6 && worst_parity <= 1e-10 && sweep.pass,
          fmt::format("walk vs quantum CMI {:.1e}; parity vs series {:.1e}; f(p) <= 8p/t on {} rows (max f/(p/t) {:.3f})",
                      worst_cmi, worst_parity, sweep.rows.size(), sweep.max_ratio_linear)};
}

Outcome determinism() {
  const std::vector<nlohmann::ordered_json> configs{
      {{"command", "lemmas"}, {"trials", 50}, {"seed", kSeed}},
      {{"command", "attack"}, {"protocol", "toy-qpke"}, {"t", 4}, {"reps", 24}, {"eps", 0.05}, {"seed", kSeed}},
      {{"command", "attack"}, {"protocol", "short-sk"}, {"params", {{"delta", 0.9}}}, {"seed", kSeed}},
      {{"command", "sweep"}, {"protocol", "parity-ka"}, {"t_values", "1,2,3,4"}, {"seed", kSeed}},
      {{"command", "walk"}, {"t", "2..64"}, {"p_grid", "0:0.01:10"}, {"seed", kSeed}}};
  int identical = 0;
  for (const auto& c : configs) {
    const auto a = run_experiment(c), b = run_experiment(c);
    const bool same = serialize_json(round_numbers(a.report)) == serialize_json(round_numbers(b.report)) &&
                      serialize_csv(a.table) == serialize_csv(b.table);
    identical += same;
  }
  return {identical == static_cast<int>(configs.size()),
          fmt::format("{}/{} configurations byte-identical in JSON and CSV", identical, configs.size())};
}

}  // namespace

int main() {
  criterion(1, "lemma suite", 120, lemma_suite);
  criterion(2, "entropy core", 60, entropy_core);
  criterion(3, "recovery", 180, recovery);
  criterion(4, "compressed oracle", 0, compressed_oracle);
  criterion(5, "hybrid-argument bound", 0, hybrid_bound);
  criterion(6, "non-interactive attack", 120, repeat_attack);
  criterion(7, "classical key-generation attack", 600, keygen_attack);
  criterion(8, "heavy-query sampling", 0, heavy_queries);
  criterion(9, "walk engine", 120, walk_engine);
  criterion(10, "determinism", 0, determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
