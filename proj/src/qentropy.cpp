#include "cmilab/qentropy.hpp"

#include <cmath>
#include <set>

namespace cmilab {

double shannon_entropy(std::span<const double> probabilities) {
  double h = 0, total = 0;
  for (double p : probabilities) {
    if (p < -1e-12) throw ValidationError("negative probability");
    total += p;
    if (p > 0) h -= p * std::log2(p);
  }
  if (std::abs(total - 1) > 1e-9) throw ValidationError("probabilities must sum to 1");
  return h;
}

double binary_entropy(double p) {
  if (p < -1e-12 || p > 1 + 1e-12) throw ValidationError("binary entropy argument outside [0,1]");
  if (p <= 0 || p >= 1) return 0;
  return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

double spectrum_entropy(const RealVector& eigenvalues) {
  const auto lam = clamp_spectrum(eigenvalues);
  double h = 0;
  for (double x : lam)
    if (x > 0) h -= x * std::log2(x);
  return h;
}

double von_neumann_entropy(const Matrix& rho) {
  if (rho.rows() == 1) return 0;
  return spectrum_entropy(hermitian_eig(rho).eigenvalues);
}

EntropyReport clamp_information(double raw, double tolerance) {
  if (raw < -tolerance)
    throw NumericalError("information quantity " + std::to_string(raw) + " is below -" + std::to_string(tolerance));
  if (raw < 0) return {0.0, true};
  return {raw, false};
}

EntropyReport von_neumann_entropy(const DensityMatrix& rho, const Labels& subset) {
  if (subset.empty()) return {0.0, false};
  const Matrix reduced = partial_trace(rho.matrix(), rho.layout(), subset);
  return clamp_information(von_neumann_entropy(reduced));
}

namespace {

Labels join(std::initializer_list<const Labels*> parts) {
  Labels out;
  std::set<std::string> seen;
  for (const auto* p : parts)
    for (const auto& l : *p) {
      if (!seen.insert(l).second) throw LayoutError("label '" + l + "' appears in more than one group");
      out.push_back(l);
    }
  return out;
}

}  // namespace

EntropyReport conditional_mutual_information(const DensityMatrix& rho, const Labels& a, const Labels& b,
                                             const Labels& c) {
  if (a.empty() || b.empty()) throw ValidationError("mutual information needs non-empty A and B");
  const auto abc = join({&a, &b, &c});
  auto s = [&](const Labels& l) { return von_neumann_entropy(rho, l).value; };
  const double raw = s(join({&a, &c})) + s(join({&b, &c})) - s(abc) - s(c);
  return clamp_information(raw);
}

EntropyReport mutual_information(const DensityMatrix& rho, const Labels& a, const Labels& b) {
  return conditional_mutual_information(rho, a, b, {});
}

}  // namespace cmilab
