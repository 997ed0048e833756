#include <doctest.h>

#include <bit>
#include <cmath>

#include "cmilab/errors.hpp"
#include "cmilab/oraclesim.hpp"
#include "cmilab/random_states.hpp"
#include "support/checks.hpp"
#include "support/circuits.hpp"

using namespace cmilab;
using namespace testing_support;

namespace {

const Vector& amplitudes(const PurifiedOracleState& s) { return std::get<PureState>(s.state).amplitudes; }

// Normalised Walsh-Hadamard matrix on k qubits, built from Kronecker products.
Matrix wht_matrix(int k) {
  Matrix h = Matrix::Identity(1, 1);
  for (int i = 0; i < k; ++i) h = kron(h, hadamard(1));
  return h;
}

// Fourier weights computed by an explicit basis change I (x) H^{(x)2^n} on the
// full amplitude vector; the function register is the last factor.
std::map<int, double> weights_by_basis_change(const PurifiedOracleState& s) {
  const auto& psi = amplitudes(s);
  const auto fdim = static_cast<Eigen::Index>(s.layout().dim_of(s.function_label));
  const Eigen::Index rest = psi.size() / fdim;
  const Matrix w = wht_matrix(1 << s.n);
  std::map<int, double> out;
  for (Eigen::Index r = 0; r < rest; ++r) {
    const Vector col = w * psi.segment(r * fdim, fdim);
    for (Eigen::Index d = 0; d < fdim; ++d) out[std::popcount(static_cast<unsigned>(d))] += std::norm(col[d]);
  }
  return out;
}

double mass_above(const std::map<int, double>& w, int d) {
  double m = 0;
  for (const auto& [k, v] : w)
    if (k > d) m += v;
  return m;
}

double total(const std::map<int, double>& w) {
  double m = 0;
  for (const auto& [k, v] : w) m += v;
  return m;
}

}  // namespace

TEST_CASE("initial purified oracle") {
  SUBCASE("n = 1 is the uniform superposition over four tables") {
    const auto s = init_purified_oracle(1, SystemLayout({{"x", 2}}));
    CHECK(s.layout().dim_of("H") == 4);
    const auto& psi = amplitudes(s);
    for (Eigen::Index h = 0; h < 4; ++h) CHECK(std::abs(psi[h] - Complex(0.5, 0)) < 1e-15);
    for (Eigen::Index i = 4; i < psi.size(); ++i) CHECK(std::abs(psi[i]) < 1e-15);
    const auto w = fourier_support_weights(s);
    CHECK(w.at(0) == doctest::Approx(1).epsilon(1e-12));
    CHECK(mass_above(w, 0) < 1e-12);
    const auto comps = fourier_components(s);
    CHECK(comps.at(0).norm() == doctest::Approx(1).epsilon(1e-12));
  }
  SUBCASE("n = 3 has a 256-dimensional function register") {
    const auto s = init_purified_oracle(3, SystemLayout({{"x", 8}}));
    CHECK(s.layout().dim_of("H") == 256);
    CHECK(std::abs(amplitudes(s).norm() - 1) <= 1e-12);
  }
  CHECK_THROWS_AS(init_purified_oracle(4, SystemLayout({{"x", 2}})), CapError);
}

TEST_CASE("dephasing the function register gives the uniform mixture over tables") {
  for (int n = 0; n <= 2; ++n) {
    const auto s = measure_register(init_purified_oracle(n, SystemLayout({{"x", std::size_t{1} << n}})), "H");
    const auto rho_h = partial_trace(s.density(), {"H"});
    const auto dim = static_cast<Eigen::Index>(rho_h.dim());
    CHECK(max_abs(rho_h.matrix() - Matrix::Identity(dim, dim) / static_cast<double>(dim)) < 1e-12);
  }
}

TEST_CASE("query examples") {
  const SystemLayout reg({{"x", 4}, {"y", 2}});
  Rng rng(11);

  SUBCASE("phase query with y = 0 is the identity") {
    auto s = apply_gate(init_purified_oracle(2, reg), {"x"}, random_unitary(4, rng));
    const auto after = apply_query(s, QueryMode::phase, "x", "y");
    CHECK(max_abs(amplitudes(after) - amplitudes(s)) < 1e-14);
  }

  SUBCASE("xor query on |x>|0> leaves a uniformly random output bit") {
    for (std::size_t x = 0; x < 4; ++x) {
      Matrix shift = Matrix::Zero(4, 4);
      for (std::size_t i = 0; i < 4; ++i) shift((i + x) % 4, i) = 1;
      auto s = apply_gate(init_purified_oracle(2, reg), {"x"}, shift);
      s = apply_query(s, QueryMode::xor_out, "x", "y");
      CHECK(std::abs(amplitudes(s).norm() - 1) < 1e-10);
      const auto rho_y = partial_trace(s.density(), {"y"}).matrix();
      CHECK(std::abs(rho_y(0, 0).real() - 0.5) < 1e-12);
      CHECK(std::abs(rho_y(1, 1).real() - 0.5) < 1e-12);
    }
  }

  SUBCASE("phase query on a uniform input with y = 1 has Fourier weight at most 1") {
    auto s = apply_gate(init_purified_oracle(2, reg), {"x"}, hadamard(2));
    s = apply_gate(s, {"y"}, Matrix{{0, 1}, {1, 0}});
    s = apply_query(s, QueryMode::phase, "x", "y");
    const auto w = fourier_support_weights(s);
    CHECK(mass_above(w, 1) < 1e-12);
    CHECK(w.at(1) == doctest::Approx(1).epsilon(1e-12));
  }

  SUBCASE("phase and xor queries agree up to Hadamards on the output") {
    for (int trial = 0; trial < 10; ++trial) {
      auto s = apply_gate(init_purified_oracle(2, reg), {"x", "y"}, random_unitary(8, rng));
      const auto phase = apply_query(s, QueryMode::phase, "x", "y");
      auto via_xor = apply_gate(s, {"y"}, hadamard(1));
      via_xor = apply_query(via_xor, QueryMode::xor_out, "x", "y");
      via_xor = apply_gate(via_xor, {"y"}, hadamard(1));
      CHECK(max_abs(amplitudes(phase) - amplitudes(via_xor)) < 1e-12);
    }
  }

  SUBCASE("classical queries need a classical input register") {
    auto s = apply_gate(init_purified_oracle(2, reg), {"x"}, hadamard(2));
    CHECK_THROWS_AS(apply_query(s, QueryMode::classical, "x", "y"), ModeError);
    const auto measured = apply_query(measure_register(s, "x"), QueryMode::classical, "x", "y");
    CHECK(std::abs(measured.density().matrix().trace().real() - 1) < 1e-10);
  }
}

TEST_CASE("Fourier weights after queries") {
  Rng rng(5);
  SUBCASE("one query puts mass only on weights 0 and 1") {
    const auto c = random_query_circuit(2, 1, 2, rng);
    const auto w = fourier_support_weights(purified_run(c, 2));
    CHECK(total(w) == doctest::Approx(1).epsilon(1e-9));
    CHECK(mass_above(w, 1) <= 1e-9);
  }
  SUBCASE("two queries at n = 2 match an explicit basis change") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto s = purified_run(random_query_circuit(2, 2, 2, rng), 2);
      const auto lib = fourier_support_weights(s);
      auto direct = weights_by_basis_change(s);
      CHECK(mass_above(lib, 2) <= 1e-9);
      for (int k = 0; k <= 4; ++k) CHECK(std::abs(lib.at(k) - direct[k]) < 1e-12);
    }
  }
}

TEST_CASE("property: d queries leave no Fourier mass above weight d") {
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int d = 1 + static_cast<int>(rng.below(3));
    const std::size_t work = n == 3 ? 1 : 2;
    const auto w = fourier_support_weights(purified_run(random_query_circuit(n, d, work, rng), n));
    CHECK(std::abs(total(w) - 1) <= 1e-9);
    worst = std::max(worst, mass_above(w, d));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("property: non-adaptive queries give orthogonal Fourier components") {
  Rng rng(77);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const int d = 1 + static_cast<int>(rng.below(2));
    const auto comps = fourier_components(purified_run(random_parallel_circuit(n, d, rng), n));
    double worst = 0;
    for (auto a = comps.begin(); a != comps.end(); ++a)
      for (auto b = std::next(a); b != comps.end(); ++b) worst = std::max(worst, std::abs(a->second.dot(b->second)));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("oracle sampling and enumeration") {
  const auto all = enumerate_oracles(1);
  REQUIRE(all.size() == 4);
  for (std::uint64_t i = 0; i < 4; ++i) {
    CHECK(all[i].index() == i);
    CHECK(all[i] == OracleFunction::from_index(1, i));
  }
  CHECK(enumerate_oracles(3).size() == 256);
  CHECK_THROWS(enumerate_oracles(4));

  CHECK(sample_oracle(3, 99) == sample_oracle(3, 99));

  constexpr int samples = 100000;
  std::vector<int> ones(8, 0);
  for (int s = 0; s < samples; ++s) {
    const auto h = sample_oracle(3, static_cast<std::uint64_t>(s));
    for (std::uint64_t x = 0; x < 8; ++x) ones[x] += h(x);
  }
  const double sigma = std::sqrt(0.25 / samples);
  for (int c : ones) CHECK(std::abs(static_cast<double>(c) / samples - 0.5) <= 3 * sigma);
}

TEST_CASE("oracle serialisation") {
  const OracleFunction h(3, {1, 0, 1, 1, 0, 0, 0, 1});
  CHECK(h.hex() == "d8");
  CHECK(OracleFunction::from_json(h.to_json()) == h);
  CHECK(OracleFunction::from_index(3, h.index()) == h);
  CHECK_THROWS_AS(OracleFunction(2, {0, 1, 0}), ValidationError);
}

TEST_CASE("reprogramming") {
  const OracleFunction h(2, {0, 1, 1, 0});
  CHECK(reprogram_oracle(h, QueryRecord{}) == h);

  QueryRecord full;
  const std::vector<int> target{1, 1, 0, 0};
  for (std::uint64_t x = 0; x < 4; ++x) full.add(x, target[x]);
  const auto rf = reprogram_oracle(h, full);
  for (std::uint64_t x = 0; x < 4; ++x) CHECK(rf(x) == target[x]);

  QueryRecord flip;
  flip.add(0, 1 - h(0));
  const auto g = reprogram_oracle(h, flip);
  std::vector<std::uint64_t> diff;
  for (std::uint64_t x = 0; x < 4; ++x)
    if (g(x) != h(x)) diff.push_back(x);
  CHECK(diff == std::vector<std::uint64_t>{0});
  CHECK(reprogram_oracle(g, flip) == g);
  CHECK(flip.consistent_with(g));
  CHECK_FALSE(flip.consistent_with(h));

  QueryRecord r;
  r.add(2, 1);
  r.add(2, 1);
  CHECK_THROWS_AS(r.add(2, 0), ConflictError);
}

TEST_CASE("property: reprogramming agrees with the record and the base oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const auto h = sample_oracle(n, rng.engine()());
    QueryRecord r;
    for (std::uint64_t x = 0; x < h.domain_size(); ++x)
      if (rng.uniform() < 0.4) r.add(x, static_cast<int>(rng.below(2)));
    const auto g = reprogram_oracle(h, r);
    for (std::uint64_t x = 0; x < h.domain_size(); ++x) CHECK(g(x) == (r.contains(x) ? r.value(x) : h(x)));
    CHECK(reprogram_oracle(g, r) == g);
  }
}
