#include "cmilab/random_states.hpp"

#include <cmath>

namespace cmilab {

Matrix ginibre(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double re = rng.normal();
      const double im = rng.normal();
      g(i, j) = Complex(re, im) / std::sqrt(2.0);
    }
  return g;
}

Matrix random_unitary(std::size_t dim, Rng& rng) {
  const Matrix z = ginibre(dim, dim, rng);
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  // fix the phases so the distribution is Haar
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const Complex d = r(i, i);
    if (std::abs(d) > 0) q.col(i) *= d / std::abs(d);
  }
  return q;
}

Vector random_pure_state(std::size_t dim, Rng& rng) {
  Vector v = ginibre(dim, 1, rng).col(0);
  return v / v.norm();
}

Matrix random_density_matrix(std::size_t dim, Rng& rng, std::size_t rank) {
  if (rank == 0) rank = dim;
  const Matrix g = ginibre(dim, rank, rng);
  Matrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

std::vector<double> random_distribution(std::size_t size, Rng& rng) {
  std::vector<double> p(size);
  double total = 0;
  for (auto& x : p) {
    double u = rng.uniform();
    while (u <= 0) u = rng.uniform();
    x = -std::log(u);
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

}  // namespace cmilab
