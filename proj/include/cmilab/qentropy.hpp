#pragma once

#include <span>
#include <vector>

#include "cmilab/qmat.hpp"

namespace cmilab {

// Entropies are in bits throughout.
struct EntropyReport {
  double value = 0;
  bool clamped = false;  // a small negative value was rounded up to 0
};

double shannon_entropy(std::span<const double> probabilities);
double binary_entropy(double p);
// -sum lambda log2 lambda over a (clamped) spectrum.
double spectrum_entropy(const RealVector& eigenvalues);
double von_neumann_entropy(const Matrix& rho);

EntropyReport von_neumann_entropy(const DensityMatrix& rho, const Labels& subset);

// S(AC) + S(BC) - S(ABC) - S(C); `c` may be empty. Values in [-1e-8, 0) clamp
// to 0 with the flag set; below -1e-8 a NumericalError is thrown.
EntropyReport conditional_mutual_information(const DensityMatrix& rho, const Labels& a, const Labels& b,
                                             const Labels& c);
EntropyReport mutual_information(const DensityMatrix& rho, const Labels& a, const Labels& b);

// Shared by the dense and ensemble paths.
EntropyReport clamp_information(double raw, double tolerance = 1e-8);

}  // namespace cmilab
