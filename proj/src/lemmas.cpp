#include "cmilab/lemmas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmilab/errors.hpp"
#include "cmilab/qentropy.hpp"
#include "cmilab/random_states.hpp"

namespace cmilab {

nlohmann::ordered_json CheckResult::to_json() const {
  return {{"lemma_id", lemma_id}, {"trials", trials},  {"max_violation", max_violation},
          {"tolerance", tolerance}, {"pass", pass},    {"details", details}};
}

PrefixCmi prefix_cmi_series(const DensityMatrix& rho, const Labels& a_blocks, const Labels& b, const Labels& c) {
  if (a_blocks.empty()) throw ValidationError("need at least one A block");
  PrefixCmi out;
  Labels cond = c;
  for (std::size_t i = 0; i < a_blocks.size(); ++i) {
    out.series.push_back(conditional_mutual_information(rho, {a_blocks.back()}, b, cond).value);
    cond.push_back(a_blocks[i]);
  }
  out.min = *std::min_element(out.series.begin(), out.series.end());
  out.bound = von_neumann_entropy(rho, b).value / static_cast<double>(a_blocks.size());
  return out;
}

namespace {

Matrix random_local_state(std::size_t dim, bool classical, Rng& rng) {
  if (!classical) return random_density_matrix(dim, rng, 1 + rng.below(dim));
  const auto p = random_distribution(dim, rng);
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = p[i];
  return m;
}

Matrix symmetrised_product(const std::vector<Matrix>& blocks) {
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  Matrix acc;
  std::size_t count = 0;
  do {
    Matrix term = blocks[order[0]];
    for (std::size_t j = 1; j < order.size(); ++j) term = kron(term, blocks[order[j]]);
    if (count == 0) acc = term;
    else acc += term;
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  return acc / static_cast<double>(count);
}

Labels a_labels(int t) {
  Labels a;
  for (int i = 1; i <= t; ++i) a.push_back("A" + std::to_string(i));
  return a;
}

}  // namespace

DensityMatrix random_symmetric_separable(int t, std::size_t dim_a, std::size_t dim_b, std::size_t dim_c,
                                         int max_terms, Rng& rng) {
  if (t < 1 || max_terms < 1) throw ValidationError("need t >= 1 and at least one term");
  std::vector<Factor> f{{"C", dim_c}, {"B", dim_b}};
  for (const auto& l : a_labels(t)) f.push_back({l, dim_a});
  SystemLayout layout(f);
  const bool classical = rng.below(3) == 0;
  const auto terms = 1 + rng.below(static_cast<std::uint64_t>(max_terms));
  const auto w = random_distribution(terms, rng);
  Matrix rho = Matrix::Zero(static_cast<Eigen::Index>(layout.total_dim()), static_cast<Eigen::Index>(layout.total_dim()));
  for (std::size_t k = 0; k < terms; ++k) {
    const Matrix rc = random_local_state(dim_c, classical, rng);
    const Matrix rb = random_local_state(dim_b, classical, rng);
    std::vector<Matrix> blocks;
    for (int i = 0; i < t; ++i) blocks.push_back(random_local_state(dim_a, classical, rng));
    rho += w[k] * kron(kron(rc, rb), symmetrised_product(blocks));
  }
  return DensityMatrix(layout, rho);
}

DensityMatrix apply_isometric_channel(const DensityMatrix& rho, const std::string& target, const Matrix& unitary,
                                      std::size_t ancilla_dim, std::size_t keep_dim) {
  const auto& layout = rho.layout();
  const std::size_t da = layout.dim_of(target);
  const std::size_t joint = da * ancilla_dim;
  if (ancilla_dim == 0 || unitary.rows() != static_cast<Eigen::Index>(joint) || unitary.cols() != unitary.rows())
    throw ValidationError("channel unitary must act on target times ancilla");
  if (keep_dim == 0 || joint % keep_dim != 0) throw ValidationError("kept dimension must divide the joint dimension");
  const std::size_t rest = joint / keep_dim;

  Labels order{target};
  for (const auto& l : layout.labels())
    if (l != target) order.push_back(l);
  const auto moved = permute_factors(rho, order);
  const auto others = static_cast<Eigen::Index>(layout.total_dim() / da);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(keep_dim) * others, static_cast<Eigen::Index>(keep_dim) * others);
  for (std::size_t r = 0; r < rest; ++r) {
    Matrix k(static_cast<Eigen::Index>(keep_dim), static_cast<Eigen::Index>(da));
    for (std::size_t o = 0; o < keep_dim; ++o)
      for (std::size_t a = 0; a < da; ++a)
        k(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(a)) =
            unitary(static_cast<Eigen::Index>(o * rest + r), static_cast<Eigen::Index>(a * ancilla_dim));
    const Matrix kk = kron(k, Matrix::Identity(others, others));
    out.noalias() += kk * moved.matrix() * kk.adjoint();
  }
  std::vector<Factor> f{{target, keep_dim}};
  for (std::size_t i = 1; i < order.size(); ++i) f.push_back({order[i], layout.dim_of(order[i])});
  return permute_factors(DensityMatrix(SystemLayout(f), out, false), layout.labels());
}

DensityMatrix broadcast_classical(const DensityMatrix& rho, const std::string& m, const Labels& copies) {
  const auto& layout = rho.layout();
  const auto pos = layout.position(m);
  const std::size_t dm = layout.dim_of(m);
  const auto& mat = rho.matrix();
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.cols(); ++j)
      if (layout.digits(static_cast<std::size_t>(i))[pos] != layout.digits(static_cast<std::size_t>(j))[pos] &&
          std::abs(mat(i, j)) > 1e-12)
        throw PreconditionError("register '" + m + "' is not classical");
  std::vector<Factor> f = layout.factors();
  for (const auto& c : copies) f.push_back({c, dm});
  SystemLayout out_layout(f);
  const std::size_t fan = out_layout.total_dim() / layout.total_dim();
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(out_layout.total_dim()), static_cast<Eigen::Index>(layout.total_dim()));
  for (std::size_t i = 0; i < layout.total_dim(); ++i) {
    const auto digit = layout.digits(i)[pos];
    std::size_t tail = 0;
    for (std::size_t c = 0; c < copies.size(); ++c) tail = tail * dm + digit;
    v(static_cast<Eigen::Index>(i * fan + tail), static_cast<Eigen::Index>(i)) = 1;
  }
  return DensityMatrix(out_layout, v * mat * v.adjoint(), false);
}

SupportCase support_escape(const std::vector<double>& dx, const std::vector<double>& dy) {
  if (dx.size() != dy.size()) throw ValidationError("distributions must share a domain");
  SupportCase s;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (dy[i] == 0) s.escape += dx[i];
    s.tv += std::abs(dx[i] - dy[i]);
  }
  s.tv /= 2;
  return s;
}

CheckResult check_permutation_invariance(int t, int trials, std::uint64_t seed) {
  if (t < 1 || t > 4) throw ValidationError("permutation check supports 1 <= t <= 4");
  CheckResult r;
  r.lemma_id = "permutation_invariance";
  r.trials = trials;
  r.tolerance = kEntropyTolerance;
  r.max_violation = -1e300;
  double smallest_gap = 1e300, largest_min = 0;
  const auto a = a_labels(t);
  for (int k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const auto rho = random_symmetric_separable(t, 2, 2, 2, 8, rng);
    const auto p = prefix_cmi_series(rho, a, {"B"}, {"C"});
    r.max_violation = std::max(r.max_violation, p.min - p.bound);
    smallest_gap = std::min(smallest_gap, p.bound - p.min);
    largest_min = std::max(largest_min, p.min);
  }
  r.pass = r.max_violation <= r.tolerance;
  r.details = {{"t", t}, {"smallest_slack", smallest_gap}, {"largest_min_cmi", largest_min}};
  return r;
}

CheckResult check_local_op_monotonicity(int trials, std::uint64_t seed) {
  CheckResult r;
  r.lemma_id = "local_operation_monotonicity";
  r.trials = trials;
  r.tolerance = kEntropyTolerance;
  r.max_violation = -1e300;
  const SystemLayout layout({{"A", 2}, {"B", 2}, {"C", 2}});
  for (int k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const DensityMatrix rho(layout, random_density_matrix(8, rng, 1 + rng.below(8)));
    const std::size_t anc = 1 + rng.below(2);
    const std::size_t joint = 2 * anc;
    const std::size_t keep = joint == 2 ? 1 + rng.below(2) : std::size_t{1} << rng.below(3);
    const Matrix u = k == 0 ? Matrix(Matrix::Identity(static_cast<Eigen::Index>(joint), static_cast<Eigen::Index>(joint)))
                            : random_unitary(joint, rng);
    const auto out = apply_isometric_channel(rho, "A", u, anc, keep);
    const double before = conditional_mutual_information(rho, {"A"}, {"B"}, {"C"}).value;
    const double after = conditional_mutual_information(out, {"A"}, {"B"}, {"C"}).value;
    r.max_violation = std::max(r.max_violation, after - before);
  }
  r.pass = r.max_violation <= r.tolerance;
  return r;
}

CheckResult check_classical_broadcast(int trials, std::uint64_t seed) {
  CheckResult r;
  r.lemma_id = "classical_broadcast";
  r.trials = trials;
  r.tolerance = kEntropyTolerance;
  r.max_violation = -1e300;
  double copy_dev = 0;
  int strict = 0;
  const SystemLayout layout({{"W", 2}, {"M", 2}, {"B", 2}, {"C", 2}});
  for (int k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const int mode = static_cast<int>(rng.below(3));  // deterministic, independent, correlated
    std::vector<double> pm = mode == 0 ? std::vector<double>{1.0, 0.0} : random_distribution(2, rng);
    if (mode == 0 && rng.below(2)) std::swap(pm[0], pm[1]);
    const Matrix shared = random_density_matrix(8, rng, 1 + rng.below(8));
    Matrix rho = Matrix::Zero(16, 16);
    for (std::size_t m = 0; m < 2; ++m) {
      const Matrix block = mode == 2 ? random_density_matrix(8, rng, 1 + rng.below(8)) : shared;
      Matrix proj = Matrix::Zero(2, 2);
      proj(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) = 1;
      const Matrix full = kron(block, proj);
      rho += pm[m] * permute_factors(
                         DensityMatrix(SystemLayout({{"W", 2}, {"B", 2}, {"C", 2}, {"M", 2}}), full, false),
                         {"W", "M", "B", "C"})
                         .matrix();
    }
    const DensityMatrix before(layout, rho);
    const auto after = broadcast_classical(before, "M", {"MB", "MC"});
    const double i0 = conditional_mutual_information(before, {"W", "M"}, {"B"}, {"C"}).value;
    const double i1 = conditional_mutual_information(after, {"W", "M"}, {"B", "MB"}, {"C", "MC"}).value;
    r.max_violation = std::max(r.max_violation, i1 - i0);
    if (i1 < i0 - 1e-6) ++strict;
    copy_dev = std::max(copy_dev, std::abs(von_neumann_entropy(before, {"W", "M", "B", "C"}).value -
                                           von_neumann_entropy(after, after.layout().labels()).value));
    copy_dev = std::max(copy_dev, std::abs(von_neumann_entropy(before, {"W", "M"}).value -
                                           von_neumann_entropy(after, {"W", "M", "MB", "MC"}).value));
  }
  r.pass = r.max_violation <= r.tolerance && copy_dev <= 1e-9;
  r.details = {{"max_copy_entropy_deviation", copy_dev}, {"strict_decreases", strict}};
  return r;
}

CheckResult check_support_lemma(int trials, std::uint64_t seed) {
  CheckResult r;
  r.lemma_id = "support";
  r.trials = trials;
  r.tolerance = kClassicalTolerance;
  r.max_violation = -1e300;
  double max_escape = 0;
  for (int k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const std::size_t size = 2 + rng.below(11);
    const auto dx = random_distribution(size, rng);
    std::vector<double> dy;
    const auto mode = rng.below(4);
    if (mode == 0) {
      dy = dx;
    } else {
      // Mix dx with a fresh distribution, then zero a random subset and renormalise.
      const double alpha = mode == 3 ? 1.0 : rng.uniform();
      const auto q = random_distribution(size, rng);
      dy.resize(size);
      for (std::size_t i = 0; i < size; ++i) dy[i] = (1 - alpha) * dx[i] + alpha * q[i];
      const auto zeros = rng.below(size);
      for (std::uint64_t z = 0; z < zeros; ++z) dy[rng.below(size)] = 0;
      double total = std::accumulate(dy.begin(), dy.end(), 0.0);
      if (total <= 0) {
        dy.assign(size, 0.0);
        dy[rng.below(size)] = 1;
        total = 1;
      }
      for (auto& v : dy) v /= total;
    }
    const auto s = support_escape(dx, dy);
    max_escape = std::max(max_escape, s.escape);
    r.max_violation = std::max(r.max_violation, s.escape - 2 * s.tv);
  }
  r.pass = r.max_violation <= r.tolerance;
  r.details = {{"largest_escape_mass", max_escape}};
  return r;
}

std::vector<CheckResult> run_lemma_suite(int trials, std::uint64_t seed, int t) {
  if (trials < 1) throw ValidationError("trials must be positive");
  return {check_permutation_invariance(t, trials, derive_seed(seed, 1)),
          check_local_op_monotonicity(trials, derive_seed(seed, 2)),
          check_classical_broadcast(trials, derive_seed(seed, 3)),
          check_support_lemma(trials, derive_seed(seed, 4))};
}

}  // namespace cmilab
