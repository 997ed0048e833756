#include "cmilab/qmat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "index_util.hpp"

namespace cmilab {

std::size_t default_dim_cap() {
  if (const char* env = std::getenv("QML_DIM_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::size_t{1} << 14;
}

// ---------------------------------------------------------------- layout

SystemLayout::SystemLayout(std::vector<Factor> factors, std::size_t cap) : factors_(std::move(factors)) {
  std::set<std::string> seen;
  total_ = 1;
  for (const auto& f : factors_) {
    if (f.label.empty()) throw LayoutError("empty factor label");
    if (f.dim == 0) throw LayoutError("factor '" + f.label + "' has dimension 0");
    if (!seen.insert(f.label).second) throw LayoutError("duplicate factor label '" + f.label + "'");
    if (total_ > cap / f.dim)
      throw CapError("layout dimension exceeds cap " + std::to_string(cap));
    total_ *= f.dim;
  }
}

std::optional<std::size_t> SystemLayout::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].label == label) return i;
  return std::nullopt;
}

std::size_t SystemLayout::position(const std::string& label) const {
  auto i = index_of(label);
  if (!i) throw LayoutError("unknown factor label '" + label + "'");
  return *i;
}

Labels SystemLayout::labels() const {
  Labels out;
  for (const auto& f : factors_) out.push_back(f.label);
  return out;
}

std::vector<std::size_t> SystemLayout::strides() const {
  std::vector<std::size_t> s(factors_.size());
  std::size_t acc = 1;
  for (std::size_t i = factors_.size(); i-- > 0;) {
    s[i] = acc;
    acc *= factors_[i].dim;
  }
  return s;
}

std::vector<std::size_t> SystemLayout::digits(std::size_t index) const {
  std::vector<std::size_t> d(factors_.size());
  for (std::size_t i = factors_.size(); i-- > 0;) {
    d[i] = index % factors_[i].dim;
    index /= factors_[i].dim;
  }
  return d;
}

std::size_t SystemLayout::index(const std::vector<std::size_t>& digits) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < factors_.size(); ++i) idx = idx * factors_[i].dim + digits[i];
  return idx;
}

SystemLayout SystemLayout::concat(const SystemLayout& other) const {
  auto f = factors_;
  f.insert(f.end(), other.factors_.begin(), other.factors_.end());
  return SystemLayout(std::move(f));
}

SystemLayout SystemLayout::subset(const Labels& keep) const {
  std::set<std::string> k(keep.begin(), keep.end());
  if (k.size() != keep.size()) throw LayoutError("repeated label in subset");
  for (const auto& l : keep) position(l);
  std::vector<Factor> f;
  for (const auto& x : factors_)
    if (k.count(x.label)) f.push_back(x);
  return SystemLayout(std::move(f));
}

SystemLayout SystemLayout::reordered(const Labels& order) const {
  std::vector<Factor> f;
  for (const auto& l : order) f.push_back(factors_[position(l)]);
  return SystemLayout(std::move(f));
}

SystemLayout SystemLayout::renamed(const std::function<std::string(const std::string&)>& fn) const {
  std::vector<Factor> f = factors_;
  for (auto& x : f) x.label = fn(x.label);
  return SystemLayout(std::move(f));
}

namespace detail {

SplitIndex split_index(const SystemLayout& layout, const Labels& targets) {
  const auto strides = layout.strides();
  std::vector<bool> is_target(layout.size(), false);
  std::vector<std::size_t> tpos;
  for (const auto& l : targets) {
    const auto p = layout.position(l);
    if (is_target[p]) throw LayoutError("repeated target label '" + l + "'");
    is_target[p] = true;
    tpos.push_back(p);
  }
  SplitIndex out;
  out.target_offsets.assign(1, 0);
  for (auto p : tpos) {
    std::vector<std::size_t> next;
    next.reserve(out.target_offsets.size() * layout[p].dim);
    for (auto base : out.target_offsets)
      for (std::size_t d = 0; d < layout[p].dim; ++d) next.push_back(base + d * strides[p]);
    out.target_offsets = std::move(next);
  }
  out.rest_offsets.assign(1, 0);
  for (std::size_t p = 0; p < layout.size(); ++p) {
    if (is_target[p]) continue;
    std::vector<std::size_t> next;
    next.reserve(out.rest_offsets.size() * layout[p].dim);
    for (auto base : out.rest_offsets)
      for (std::size_t d = 0; d < layout[p].dim; ++d) next.push_back(base + d * strides[p]);
    out.rest_offsets = std::move(next);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- eigen

namespace {

void sort_descending(RealVector& vals, Matrix& vecs) {
  const auto n = vals.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] > vals[b]; });
  RealVector v2(n);
  Matrix m2(vecs.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v2[i] = vals[order[i]];
    m2.col(i) = vecs.col(order[i]);
  }
  vals = std::move(v2);
  vecs = std::move(m2);
}

void check_hermitian(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("matrix is not square");
  if (m.size() == 0) return;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw ValidationError("matrix is not Hermitian");
}

}  // namespace

HermitianEigenDecomposition jacobi_eig(const Matrix& m) {
  check_hermitian(m);
  const Eigen::Index n = m.rows();
  Matrix a = 0.5 * (m + m.adjoint());
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.norm();
  if (scale > 0) {
    for (int sweep = 0; sweep < 100; ++sweep) {
      double off = 0;
      for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index q = p + 1; q < n; ++q) off += std::norm(a(p, q));
      if (std::sqrt(2 * off) <= 1e-12 * scale) break;
      for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = p + 1; q < n; ++q) {
          const Complex b = a(p, q);
          const double beta = std::abs(b);
          if (beta <= 1e-300 || beta <= 1e-18 * scale) continue;
          const Complex e = b / beta;
          const double app = a(p, p).real(), aqq = a(q, q).real();
          const double zeta = (aqq - app) / (2 * beta);
          const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
          const double c = 1 / std::sqrt(1 + t * t);
          const double s = t * c;
          const Complex upp = c, upq = s, uqp = -s * std::conj(e), uqq = c * std::conj(e);
          for (Eigen::Index k = 0; k < n; ++k) {
            const Complex akp = a(k, p), akq = a(k, q);
            a(k, p) = akp * upp + akq * uqp;
            a(k, q) = akp * upq + akq * uqq;
          }
          for (Eigen::Index k = 0; k < n; ++k) {
            const Complex apk = a(p, k), aqk = a(q, k);
            a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
            a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
          }
          a(p, q) = a(q, p) = 0;
          a(p, p) = a(p, p).real();
          a(q, q) = a(q, q).real();
          for (Eigen::Index k = 0; k < n; ++k) {
            const Complex vkp = v(k, p), vkq = v(k, q);
            v(k, p) = vkp * upp + vkq * uqp;
            v(k, q) = vkp * upq + vkq * uqq;
          }
        }
      }
    }
  }
  HermitianEigenDecomposition out;
  out.eigenvalues = a.diagonal().real();
  out.eigenvectors = std::move(v);
  sort_descending(out.eigenvalues, out.eigenvectors);
  return out;
}

HermitianEigenDecomposition hermitian_eig(const Matrix& m, EigenMethod method) {
  check_hermitian(m);
  if (method == EigenMethod::jacobi || (method == EigenMethod::automatic && m.rows() <= 48))
    return jacobi_eig(m);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.adjoint()));
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed to converge");
  HermitianEigenDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
  sort_descending(out.eigenvalues, out.eigenvectors);
  return out;
}

RealVector clamp_spectrum(const RealVector& eigenvalues, double tolerance) {
  RealVector out = eigenvalues;
  for (auto& x : out) {
    if (x < -tolerance)
      throw ValidationError("eigenvalue " + std::to_string(x) + " below -" + std::to_string(tolerance));
    if (x < 0) x = 0;
  }
  return out;
}

Matrix matrix_apply_spectral(const Matrix& m, const std::function<Complex(double)>& f, NullPolicy policy,
                             double null_tol) {
  const auto eig = hermitian_eig(m);
  const RealVector lams = clamp_spectrum(eig.eigenvalues);
  Vector g(lams.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double lam = lams[i];
    if (std::abs(lam) <= null_tol) {
      if (policy == NullPolicy::error)
        throw SingularityError("matrix has eigenvalue " + std::to_string(lam) + " inside the null tolerance");
      g[i] = 0;
    } else {
      g[i] = f(lam);
    }
  }
  return eig.eigenvectors * g.asDiagonal() * eig.eigenvectors.adjoint();
}

// ---------------------------------------------------------------- states

DensityMatrix::DensityMatrix(SystemLayout layout, Matrix rho, bool validate)
    : layout_(std::move(layout)), rho_(std::move(rho)) {
  if (static_cast<std::size_t>(rho_.rows()) != layout_.total_dim() || rho_.rows() != rho_.cols())
    throw LayoutError("matrix shape " + std::to_string(rho_.rows()) + "x" + std::to_string(rho_.cols()) +
                      " does not match layout dimension " + std::to_string(layout_.total_dim()));
  if (!validate) return;
  if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw ValidationError("density matrix is not Hermitian");
  if (std::abs(rho_.trace() - Complex(1.0)) > 1e-9) throw ValidationError("density matrix trace is not 1");
  const auto eig = hermitian_eig(rho_);
  if (eig.eigenvalues.size() && eig.eigenvalues[eig.eigenvalues.size() - 1] < -1e-9)
    throw ValidationError("density matrix is not positive semidefinite");
}

DensityMatrix DensityMatrix::from_pure(SystemLayout layout, const Vector& psi) {
  if (static_cast<std::size_t>(psi.size()) != layout.total_dim()) throw LayoutError("state vector size mismatch");
  const double nrm = psi.norm();
  if (std::abs(nrm - 1.0) > 1e-9) throw ValidationError("state vector is not normalised");
  return DensityMatrix(std::move(layout), psi * psi.adjoint(), false);
}

DensityMatrix DensityMatrix::maximally_mixed(SystemLayout layout) {
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  Matrix m = Matrix::Identity(d, d) / static_cast<double>(d);
  return DensityMatrix(std::move(layout), std::move(m), false);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b) {
  auto layout = a.layout().concat(b.layout());
  return DensityMatrix(std::move(layout), kron(a.matrix(), b.matrix()), false);
}

Matrix partial_trace(const Matrix& rho, const SystemLayout& layout, const Labels& keep) {
  const auto kept = layout.subset(keep).labels();
  const auto split = detail::split_index(layout, kept);
  const auto dk = static_cast<Eigen::Index>(split.target_offsets.size());
  Matrix out = Matrix::Zero(dk, dk);
  for (auto r : split.rest_offsets)
    for (Eigen::Index i = 0; i < dk; ++i) {
      const auto row = r + split.target_offsets[i];
      for (Eigen::Index j = 0; j < dk; ++j) out(i, j) += rho(row, r + split.target_offsets[j]);
    }
  return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, const Labels& keep) {
  auto sub = rho.layout().subset(keep);
  return DensityMatrix(std::move(sub), partial_trace(rho.matrix(), rho.layout(), keep), false);
}

Matrix reduced_from_pure(const Vector& psi, const SystemLayout& layout, const Labels& keep) {
  const auto kept = layout.subset(keep).labels();
  const auto split = detail::split_index(layout, kept);
  const auto dk = static_cast<Eigen::Index>(split.target_offsets.size());
  const auto dr = static_cast<Eigen::Index>(split.rest_offsets.size());
  Matrix m(dk, dr);
  for (Eigen::Index r = 0; r < dr; ++r)
    for (Eigen::Index i = 0; i < dk; ++i) m(i, r) = psi[split.rest_offsets[r] + split.target_offsets[i]];
  return m * m.adjoint();
}

namespace {

std::vector<std::size_t> permutation_map(const SystemLayout& layout, const Labels& order) {
  if (order.size() != layout.size()) throw LayoutError("permutation must name every factor");
  return detail::split_index(layout, order).target_offsets;
}

}  // namespace

Vector permute_factors(const Vector& psi, const SystemLayout& layout, const Labels& order) {
  const auto map = permutation_map(layout, order);
  Vector out(psi.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = psi[map[i]];
  return out;
}

Matrix permute_factors(const Matrix& rho, const SystemLayout& layout, const Labels& order) {
  const auto map = permutation_map(layout, order);
  const auto d = map.size();
  Matrix out(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = rho(map[i], map[j]);
  return out;
}

DensityMatrix permute_factors(const DensityMatrix& rho, const Labels& order) {
  auto layout = rho.layout().reordered(order);
  return DensityMatrix(std::move(layout), permute_factors(rho.matrix(), rho.layout(), order), false);
}

double trace_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw LayoutError("trace distance of mismatched shapes");
  const auto eig = hermitian_eig(a - b);
  return 0.5 * eig.eigenvalues.cwiseAbs().sum();
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (!(a.layout() == b.layout())) throw LayoutError("trace distance of states on different layouts");
  return trace_distance(a.matrix(), b.matrix());
}

PureState purify(const DensityMatrix& rho, const std::string& ancilla_label) {
  const auto eig = hermitian_eig(rho.matrix());
  const auto lam = clamp_spectrum(eig.eigenvalues);
  const auto d = static_cast<Eigen::Index>(rho.dim());
  Vector psi = Vector::Zero(d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (lam[i] == 0) continue;
    psi += std::sqrt(lam[i]) * kron(Vector(eig.eigenvectors.col(i)), basis_vector(d, i));
  }
  auto layout = rho.layout().concat(SystemLayout({{ancilla_label, rho.dim()}}));
  return {std::move(layout), std::move(psi)};
}

// ---------------------------------------------------------------- local ops

void apply_local(Vector& psi, const SystemLayout& layout, const Labels& targets, const Matrix& op) {
  const auto split = detail::split_index(layout, targets);
  const auto dt = static_cast<Eigen::Index>(split.target_offsets.size());
  if (op.rows() != dt || op.cols() != dt) throw LayoutError("operator shape does not match target dimension");
  Vector tmp(dt), res(dt);
  for (auto r : split.rest_offsets) {
    for (Eigen::Index i = 0; i < dt; ++i) tmp[i] = psi[r + split.target_offsets[i]];
    res.noalias() = op * tmp;
    for (Eigen::Index i = 0; i < dt; ++i) psi[r + split.target_offsets[i]] = res[i];
  }
}

Matrix apply_local(const Matrix& rho, const SystemLayout& layout, const Labels& targets, const Matrix& op) {
  Matrix a = rho;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    Vector col = a.col(c);
    apply_local(col, layout, targets, op);
    a.col(c) = col;
  }
  Matrix b = a.adjoint();
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    Vector col = b.col(c);
    apply_local(col, layout, targets, op);
    b.col(c) = col;
  }
  return b.adjoint();
}

Matrix embed_operator(const SystemLayout& layout, const Labels& targets, const Matrix& op) {
  const auto split = detail::split_index(layout, targets);
  const auto dt = static_cast<Eigen::Index>(split.target_offsets.size());
  if (op.rows() != dt || op.cols() != dt) throw LayoutError("operator shape does not match target dimension");
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  Matrix out = Matrix::Zero(d, d);
  for (auto r : split.rest_offsets)
    for (Eigen::Index i = 0; i < dt; ++i)
      for (Eigen::Index j = 0; j < dt; ++j) out(r + split.target_offsets[i], r + split.target_offsets[j]) = op(i, j);
  return out;
}

Matrix completion_unitary(const Vector& psi) {
  const auto d = psi.size();
  const double nrm = psi.norm();
  if (nrm < 1e-12) throw ValidationError("cannot complete a zero vector");
  Matrix m = Matrix::Identity(d, d);
  m.col(0) = psi / nrm;
  // Remaining identity columns are only used as a spanning set.
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ();
  const Complex overlap = q.col(0).dot(psi / nrm);
  q.col(0) *= overlap / std::abs(overlap);
  return q;
}

Matrix hadamard(std::size_t qubits) {
  Matrix h(2, 2);
  const double s = 1 / std::sqrt(2.0);
  h << s, s, s, -s;
  Matrix out = Matrix::Identity(1, 1);
  for (std::size_t i = 0; i < qubits; ++i) out = kron(out, h);
  return out;
}

Vector basis_vector(std::size_t dim, std::size_t index) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  v[static_cast<Eigen::Index>(index)] = 1;
  return v;
}

}  // namespace cmilab
