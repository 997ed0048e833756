#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmilab/errors.hpp"

namespace cmilab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Labels = std::vector<std::string>;

// Total-dimension cap for any layout; QML_DIM_CAP overrides the default 2^14.
std::size_t default_dim_cap();

struct Factor {
  std::string label;
  std::size_t dim = 1;
  bool operator==(const Factor&) const = default;
};

// Ordered tensor-factor list. The first factor is the most significant digit
// of the flat basis index.
class SystemLayout {
 public:
  SystemLayout() = default;
  explicit SystemLayout(std::vector<Factor> factors, std::size_t cap = default_dim_cap());

  std::size_t size() const { return factors_.size(); }
  bool empty() const { return factors_.empty(); }
  std::size_t total_dim() const { return total_; }
  const Factor& operator[](std::size_t i) const { return factors_[i]; }
  const std::vector<Factor>& factors() const { return factors_; }

  std::optional<std::size_t> index_of(const std::string& label) const;
  bool contains(const std::string& label) const { return index_of(label).has_value(); }
  std::size_t position(const std::string& label) const;  // throws LayoutError
  std::size_t dim_of(const std::string& label) const { return factors_[position(label)].dim; }
  Labels labels() const;

  // Row-major stride of each factor.
  std::vector<std::size_t> strides() const;
  std::vector<std::size_t> digits(std::size_t index) const;
  std::size_t index(const std::vector<std::size_t>& digits) const;

  SystemLayout concat(const SystemLayout& other) const;
  // Factors named in `keep`, in this layout's order.
  SystemLayout subset(const Labels& keep) const;
  // Factors named in `order`, in that order.
  SystemLayout reordered(const Labels& order) const;
  SystemLayout renamed(const std::function<std::string(const std::string&)>& fn) const;

  bool operator==(const SystemLayout& o) const { return factors_ == o.factors_; }

 private:
  std::vector<Factor> factors_;
  std::size_t total_ = 1;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  // Validates Hermiticity, unit trace and PSD-ness (eigenvalues >= -1e-9).
  DensityMatrix(SystemLayout layout, Matrix rho, bool validate = true);

  static DensityMatrix from_pure(SystemLayout layout, const Vector& psi);
  static DensityMatrix maximally_mixed(SystemLayout layout);

  const SystemLayout& layout() const { return layout_; }
  const Matrix& matrix() const { return rho_; }
  std::size_t dim() const { return static_cast<std::size_t>(rho_.rows()); }

 private:
  SystemLayout layout_;
  Matrix rho_;
};

struct PureState {
  SystemLayout layout;
  Vector amplitudes;
};

struct HermitianEigenDecomposition {
  RealVector eigenvalues;  // descending
  Matrix eigenvectors;     // columns
};

enum class EigenMethod { automatic, jacobi, library };

HermitianEigenDecomposition hermitian_eig(const Matrix& m, EigenMethod method = EigenMethod::automatic);
// Cyclic Jacobi; off-diagonal threshold 1e-12 (relative to the Frobenius norm), at most 100 sweeps.
HermitianEigenDecomposition jacobi_eig(const Matrix& m);

// Eigenvalues in [-1e-9, 0) are set to 0; anything more negative throws ValidationError.
RealVector clamp_spectrum(const RealVector& eigenvalues, double tolerance = 1e-9);

enum class NullPolicy { project, error };

// f applied on the (clamped) spectrum of a PSD matrix. With project,
// eigenvalues within `null_tol` of 0 map to 0 instead of f(0); with error,
// they throw SingularityError.
Matrix matrix_apply_spectral(const Matrix& m, const std::function<Complex(double)>& f,
                             NullPolicy policy = NullPolicy::project, double null_tol = 1e-12);

DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b);
DensityMatrix partial_trace(const DensityMatrix& rho, const Labels& keep);
Matrix partial_trace(const Matrix& rho, const SystemLayout& layout, const Labels& keep);
Matrix reduced_from_pure(const Vector& psi, const SystemLayout& layout, const Labels& keep);

// Reorder the tensor factors of a state.
DensityMatrix permute_factors(const DensityMatrix& rho, const Labels& order);
Vector permute_factors(const Vector& psi, const SystemLayout& layout, const Labels& order);
Matrix permute_factors(const Matrix& rho, const SystemLayout& layout, const Labels& order);

double trace_distance(const Matrix& a, const Matrix& b);
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

// Canonical purification: sum_i sqrt(lambda_i) |v_i>|i> with the ancilla as last factor.
PureState purify(const DensityMatrix& rho, const std::string& ancilla_label);

// Apply `op` (acting on `targets`, in the given order) to a state vector in place.
void apply_local(Vector& psi, const SystemLayout& layout, const Labels& targets, const Matrix& op);
// rho -> U rho U^dagger with U acting on `targets`.
Matrix apply_local(const Matrix& rho, const SystemLayout& layout, const Labels& targets, const Matrix& op);
// Full-space matrix of `op` acting on `targets`.
Matrix embed_operator(const SystemLayout& layout, const Labels& targets, const Matrix& op);

// Unitary whose first column is `psi` (normalised).
Matrix completion_unitary(const Vector& psi);

Matrix hadamard(std::size_t qubits = 1);
Vector basis_vector(std::size_t dim, std::size_t index);
Matrix kron(const Matrix& a, const Matrix& b);
Vector kron(const Vector& a, const Vector& b);

}  // namespace cmilab
