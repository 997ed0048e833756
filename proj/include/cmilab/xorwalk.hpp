#pragma once

#include <map>
#include <string>
#include <vector>

namespace cmilab {

// A distribution on {0,1}^N (N = 2^n database bits) is a vector of 2^N
// probabilities indexed by the bitmask.
using XorDistribution = std::vector<double>;

inline constexpr int kMaxWalkBits = 16;

// One walk step is the XOR of d independent components; component l puts
// mass components[l][0] on the zero vector and components[l][i + 1] on e_i.
struct XorStepDistribution {
  int n = 0;
  std::vector<std::vector<double>> components;

  std::size_t bits() const { return std::size_t{1} << n; }
  int d() const { return static_cast<int>(components.size()); }
  void validate() const;
  XorDistribution distribution() const;
  // Total mass the components put on e_i, summed over l.
  std::vector<double> bit_weights() const;
};

enum class WalkMethod { wht_exact, poissonized_analytic };
std::string to_string(WalkMethod m);

struct WalkEntropySeries {
  std::map<int, double> values;  // t -> entropy in bits
  WalkMethod method = WalkMethod::wht_exact;
};

// In-place unnormalised Walsh-Hadamard butterfly; size must be a power of two.
void wht(std::vector<double>& v);

XorDistribution xor_convolve(const XorDistribution& a, const XorDistribution& b);
// t-fold XOR of i.i.d. samples; t = 0 gives the point mass at 0.
XorDistribution xor_power(const XorDistribution& a, int t);

WalkEntropySeries walk_entropy_series(const XorStepDistribution& steps, const std::vector<int>& ts);

// 2 S(D^{t+1}) - S(D^t) - S(D^{t+2}).
double walk_cmi(const XorStepDistribution& steps, int t);

// Pr[a Poisson(lambda) count is odd].
double parity_of_poisson(double lambda);

// Entropy of the Poissonized t-copy walk, each query repeated Poisson(ln(mu d))
// times: a sum of independent binary entropies.
double poissonized_walk_entropy(const XorStepDistribution& steps, int t, double mu);
WalkEntropySeries poissonized_entropy_series(const XorStepDistribution& steps, const std::vector<int>& ts, double mu);
// Expected total query count of t Poissonized copies.
double poissonized_expected_queries(const XorStepDistribution& steps, int t, double mu);

// f(p) = 2H(r(t p)) - H(r((t-1) p)) - H(r((t+1) p)), r(x) = (1 - e^{-2x}) / 2.
double walk_f(int t, double p);
// q^{t+1} (atanh(q^{t-1}) / q - atanh(q^{t+1})), for q in [0, 1).
double tanh_auxiliary(int t, double q);

inline constexpr double kWalkBoundConstant = 8.0;

struct FBoundRow {
  int t = 0;
  double p = 0;
  double value = 0;
  double bound = 0;  // 8 p / t on (0, 1], 8 e^{-t} above 1
  double ratio = 0;  // value / bound, 0 when the bound is 0
  bool pass = true;
};

struct FBoundSweep {
  std::vector<FBoundRow> rows;
  double max_ratio_linear = 0;       // max of f(p) / (p / t) on (0, 1]
  double max_ratio_exponential = 0;  // max of f(p) / e^{-t} on (1, 10]
  bool pass = true;
};

FBoundSweep f_bound_sweep(const std::vector<int>& t_values, const std::vector<double>& p_grid);

struct TanhRow {
  int t = 0;
  double q = 0;
  double value = 0;
  double bound = 0;  // 1/(t-1) + 1/(t+1)
  bool pass = true;
};

struct TanhSweep {
  std::vector<TanhRow> rows;
  bool pass = true;
};

TanhSweep tanh_bound_sweep(const std::vector<int>& t_values, const std::vector<double>& q_grid);

// Largest second difference of the binary entropy on a uniform grid of [0, 1].
double binary_entropy_max_second_difference(int points);

// lo:step:hi inclusive, robust to rounding at the end point.
std::vector<double> linear_grid(double lo, double step, double hi);

}  // namespace cmilab
