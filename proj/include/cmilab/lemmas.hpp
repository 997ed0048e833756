#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmilab/qmat.hpp"
#include "cmilab/rng.hpp"

namespace cmilab {

struct CheckResult {
  std::string lemma_id;
  int trials = 0;
  double max_violation = 0;
  double tolerance = 0;
  bool pass = false;  // max_violation <= tolerance
  nlohmann::ordered_json details = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

inline constexpr double kEntropyTolerance = 1e-8;
inline constexpr double kClassicalTolerance = 1e-12;

// series[i] = I(A_t : B | C, A_1..A_i) for i = 0..t-1; bound = S(B) / t.
struct PrefixCmi {
  std::vector<double> series;
  double min = 0;
  double bound = 0;
};
PrefixCmi prefix_cmi_series(const DensityMatrix& rho, const Labels& a_blocks, const Labels& b, const Labels& c);

// Layout C, B, A1..At. A mixture of at most `max_terms` product terms whose
// A part is symmetrised over all orderings of the t blocks.
DensityMatrix random_symmetric_separable(int t, std::size_t dim_a, std::size_t dim_b, std::size_t dim_c,
                                         int max_terms, Rng& rng);

// Channel on one factor: append an ancilla in |0>, apply `unitary` on
// (target, ancilla), keep the leading `keep_dim` part of the joint space.
// keep_dim must divide dim(target) * ancilla_dim.
DensityMatrix apply_isometric_channel(const DensityMatrix& rho, const std::string& target, const Matrix& unitary,
                                      std::size_t ancilla_dim, std::size_t keep_dim);

// Copies the classical register `m` into new factors named by `copies`.
// Throws PreconditionError unless rho is block diagonal in the basis of m.
DensityMatrix broadcast_classical(const DensityMatrix& rho, const std::string& m, const Labels& copies);

struct SupportCase {
  double escape = 0;  // Pr_{x ~ dx}[dy(x) = 0]
  double tv = 0;
};
SupportCase support_escape(const std::vector<double>& dx, const std::vector<double>& dy);

CheckResult check_permutation_invariance(int t, int trials, std::uint64_t seed);
CheckResult check_local_op_monotonicity(int trials, std::uint64_t seed);
CheckResult check_classical_broadcast(int trials, std::uint64_t seed);
CheckResult check_support_lemma(int trials, std::uint64_t seed);

std::vector<CheckResult> run_lemma_suite(int trials, std::uint64_t seed, int t = 4);

}  // namespace cmilab
