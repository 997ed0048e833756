#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "cmilab/errors.hpp"
#include "cmilab/qentropy.hpp"
#include "cmilab/recovery.hpp"
#include "support/checks.hpp"
#include "support/generators.hpp"

using namespace cmilab;
using namespace testing_support;

namespace {

const SystemLayout kAEB({{"A", 2}, {"E", 2}, {"B", 2}});

// m^z on the support of a Hermitian PSD matrix, via Eigen's own solver.
Matrix support_power(const Matrix& m, Complex z) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Vector d(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double l = es.eigenvalues()[i];
    d[i] = l > 1e-12 ? std::exp(z * std::log(l)) : Complex(0, 0);
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

// Rotated Petz map written out directly; rho_eb is ordered E then B.
Matrix petz_oracle(const Matrix& rho_eb, std::size_t de, std::size_t db, double s, const Matrix& x) {
  const SystemLayout l({{"E", de}, {"B", db}});
  const Matrix rho_e = partial_trace(rho_eb, l, {"E"});
  const Complex plus(0.5, s / 2), minus(0.5, -s / 2);
  const Matrix inner = support_power(rho_e, -plus) * x * support_power(rho_e, -minus);
  const Matrix lifted = kron(inner, Matrix::Identity(static_cast<Eigen::Index>(db), static_cast<Eigen::Index>(db)));
  return support_power(rho_eb, plus) * lifted * support_power(rho_eb, minus);
}

// sum_e p_e |e><e|_E (x) rho_A^e (x) rho_B^e, reordered to A, E, B.
DensityMatrix classical_markov_chain(Rng& rng, std::size_t da, std::size_t de, std::size_t db) {
  const auto p = random_distribution(de, rng);
  const auto d = static_cast<Eigen::Index>(da * de * db);
  Matrix rho = Matrix::Zero(d, d);
  const SystemLayout eab({{"E", de}, {"A", da}, {"B", db}});
  for (std::size_t e = 0; e < de; ++e) {
    Matrix proj = Matrix::Zero(static_cast<Eigen::Index>(de), static_cast<Eigen::Index>(de));
    proj(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e)) = 1;
    rho += p[e] * kron(kron(proj, random_density_matrix(da, rng)), random_density_matrix(db, rng));
  }
  return permute_factors(DensityMatrix(eab, rho), {"A", "E", "B"});
}

bool is_psd_normalised(const Matrix& m, double tol) {
  if (std::abs(m.trace() - Complex(1, 0)) > tol) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

TEST_CASE("rotated Petz map on a product state reproduces the product") {
  Rng rng(1);
  const Matrix re = random_density_matrix(2, rng), rb = random_density_matrix(3, rng);
  const DensityMatrix rho_eb(SystemLayout({{"E", 2}, {"B", 3}}), kron(re, rb));
  const auto ch = rotated_petz(rho_eb, {"E"}, {"B"}, 0);
  CHECK(ch.output_layout.labels() == Labels{"E", "B'"});
  CHECK(max_abs(ch.apply(re) - kron(re, rb)) < 1e-10);

  const DensityMatrix only_e(SystemLayout({{"E", 2}}), re);
  CHECK(max_abs(apply_recovery(ch, only_e, {"E"}).matrix() - kron(re, rb)) < 1e-10);
}

TEST_CASE("rotated Petz map matches a direct construction") {
  Rng rng(2);
  for (double s : {0.0, 0.75, -2.5}) {
    const Matrix rho_eb = random_density_matrix(4, rng);
    const auto ch = rotated_petz(DensityMatrix(SystemLayout({{"E", 2}, {"B", 2}}), rho_eb), {"E"}, {"B"}, s);
    const Matrix x = random_density_matrix(2, rng);
    CHECK(max_abs(ch.apply(x) - petz_oracle(rho_eb, 2, 2, s, x)) < 1e-9);
  }
}

TEST_CASE("recovery channels are trace preserving") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rho = random_state(kAEB, rng);
    const double s = rng.uniform(-5, 5);
    const auto ch = rotated_petz(partial_trace(rho, {"E", "B"}), {"E"}, {"B"}, s);
    Matrix sum = Matrix::Zero(2, 2);
    for (const auto& k : ch.kraus) sum += k.adjoint() * k;
    for (const auto& k : ch.dump) sum += k.adjoint() * k;
    CHECK(max_abs(sum - Matrix::Identity(2, 2)) < 1e-8);
    CHECK(max_abs(ch.completeness() - sum) < 1e-12);

    const auto out = apply_recovery(ch, partial_trace(rho, {"A", "E"}), {"E"});
    CHECK(out.layout().labels() == Labels{"A", "E", "B'"});
    CHECK(is_psd_normalised(out.matrix(), 1e-8));
  }
}

TEST_CASE("kernel of rho_E goes to the sink and strict application rejects it") {
  Matrix rho_eb = Matrix::Zero(4, 4);
  rho_eb(0, 0) = 0.5;
  rho_eb(1, 1) = 0.5;  // E pinned to |0>
  const auto ch = rotated_petz(DensityMatrix(SystemLayout({{"E", 2}, {"B", 2}}), rho_eb), {"E"}, {"B"}, 0);
  CHECK(max_abs(ch.completeness() - Matrix::Identity(2, 2)) < 1e-10);
  const DensityMatrix outside(SystemLayout({{"E", 2}}), Matrix{{0, 0}, {0, 1}});
  CHECK(ch.kernel_weight(outside.matrix()) == doctest::Approx(1));
  CHECK_THROWS_AS(apply_recovery(ch, outside, {"E"}), SupportError);
  const auto lenient = apply_recovery(ch, outside, {"E"}, false);
  CHECK(std::abs(lenient.matrix().trace().real() - 1) < 1e-10);
  CHECK_THROWS_AS(apply_recovery(ch, DensityMatrix(SystemLayout({{"F", 2}}), Matrix{{1, 0}, {0, 0}}), {"F"}),
                  LayoutError);
}

TEST_CASE("classical Markov chains are recovered exactly") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rho = classical_markov_chain(rng, 2, 2 + rng.below(2), 2);
    CHECK(conditional_mutual_information(rho, {"A"}, {"B"}, {"E"}).value <= 1e-9);
    const auto ch = rotated_petz(partial_trace(rho, {"E", "B"}), {"E"}, {"B"}, 0);
    const auto out = apply_recovery(ch, partial_trace(rho, {"A", "E"}), {"E"});
    CHECK(max_abs(out.matrix() - rho.matrix()) < 1e-8);
    CHECK(max_abs(partial_trace(out, {"A", "E"}).matrix() - partial_trace(rho, {"A", "E"}).matrix()) < 1e-6);
    const auto best = best_recovery(rho, {"A"}, {"E"}, {"B"});
    CHECK(best.achieved_td <= 1e-6);
  }
}

TEST_CASE("best recovery against the Fawzi-Renner bound on a random corpus") {
  Rng rng(5);
  int within = 0;
  constexpr int corpus = 40;
  for (int trial = 0; trial < corpus; ++trial) {
    const auto rho = random_state(kAEB, rng);
    const auto r = best_recovery(rho, {"A"}, {"E"}, {"B"});
    CHECK(r.cmi == doctest::Approx(conditional_mutual_information(rho, {"A"}, {"B"}, {"E"}).value).epsilon(1e-9));
    CHECK(r.fr_bound == doctest::Approx(std::sqrt(std::log(2.0) * r.cmi)).epsilon(1e-12));
    if (r.achieved_td <= r.fr_bound + 0.05) ++within;

    const auto narrow = best_recovery(rho, {"A"}, {"E"}, {"B"}, {0.0});
    CHECK(r.achieved_td <= narrow.achieved_td + 1e-12);
    double grid_min = 1e300;
    for (const auto& [s, td] : r.grid_td) grid_min = std::min(grid_min, td);
    CHECK(r.achieved_td == doctest::Approx(grid_min));
  }
  CHECK(within >= 0.95 * corpus);
}

TEST_CASE("recovery input checks") {
  CHECK(default_rotation_grid().size() == 41);
  CHECK(default_rotation_grid().front() == -5);
  CHECK(default_rotation_grid().back() == 5);
  CHECK(fawzi_renner_bound(0) == 0);
  Rng rng(6);
  CHECK_THROWS(best_recovery(random_state(kAEB, rng), {"A"}, {"E"}, {"B"}, {}));
}
