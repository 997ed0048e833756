#include "cmilab/xorwalk.hpp"

#include <algorithm>
#include <cmath>

#include "cmilab/errors.hpp"
#include "cmilab/qentropy.hpp"

namespace cmilab {

namespace {

void require_power_of_two(std::size_t size) {
  if (size == 0 || (size & (size - 1)) != 0) throw ValidationError("walk vectors must have power-of-two length");
  if (size > (std::size_t{1} << kMaxWalkBits))
    throw CapError("walk domain exceeds 2^" + std::to_string(kMaxWalkBits) + " points");
}

XorDistribution clean(std::vector<double> v) {
  double total = 0;
  for (auto& x : v) {
    if (x < 0) x = 0;
    total += x;
  }
  for (auto& x : v) x /= total;
  return v;
}

XorDistribution point_mass(std::size_t size) {
  XorDistribution v(size, 0.0);
  v[0] = 1;
  return v;
}

}  // namespace

void XorStepDistribution::validate() const {
  if (n < 0 || bits() > static_cast<std::size_t>(kMaxWalkBits))
    throw CapError("walk database length 2^n must be at most " + std::to_string(kMaxWalkBits));
  for (const auto& c : components) {
    if (c.size() != bits() + 1) throw ValidationError("walk component must have 2^n + 1 entries");
    double total = 0;
    for (double p : c) {
      if (p < 0) throw ValidationError("negative walk probability");
      total += p;
    }
    if (std::abs(total - 1) > 1e-12) throw ValidationError("walk component must sum to 1");
  }
}

XorDistribution XorStepDistribution::distribution() const {
  validate();
  const std::size_t size = std::size_t{1} << bits();
  XorDistribution acc = point_mass(size);
  for (const auto& c : components) {
    XorDistribution step(size, 0.0);
    step[0] = c[0];
    for (std::size_t i = 0; i < bits(); ++i) step[std::size_t{1} << i] += c[i + 1];
    acc = xor_convolve(acc, step);
  }
  return acc;
}

std::vector<double> XorStepDistribution::bit_weights() const {
  std::vector<double> w(bits(), 0.0);
  for (const auto& c : components)
    for (std::size_t i = 0; i < bits(); ++i) w[i] += c[i + 1];
  return w;
}

std::string to_string(WalkMethod m) {
  return m == WalkMethod::wht_exact ? "wht_exact" : "poissonized_analytic";
}

void wht(std::vector<double>& v) {
  require_power_of_two(v.size());
  for (std::size_t h = 1; h < v.size(); h <<= 1)
    for (std::size_t i = 0; i < v.size(); i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j], b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
}

XorDistribution xor_convolve(const XorDistribution& a, const XorDistribution& b) {
  if (a.size() != b.size()) throw ValidationError("xor_convolve needs equal-length distributions");
  auto fa = a, fb = b;
  wht(fa);
  wht(fb);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  wht(fa);
  for (auto& x : fa) x /= static_cast<double>(fa.size());
  return clean(std::move(fa));
}

XorDistribution xor_power(const XorDistribution& a, int t) {
  if (t < 0) throw ValidationError("walk length must be non-negative");
  require_power_of_two(a.size());
  if (t == 0) return point_mass(a.size());
  auto f = a;
  wht(f);
  for (auto& x : f) x = std::pow(x, t);
  wht(f);
  for (auto& x : f) x /= static_cast<double>(f.size());
  return clean(std::move(f));
}

WalkEntropySeries walk_entropy_series(const XorStepDistribution& steps, const std::vector<int>& ts) {
  const auto d = steps.distribution();
  WalkEntropySeries s;
  s.method = WalkMethod::wht_exact;
  for (int t : ts) s.values[t] = shannon_entropy(xor_power(d, t));
  return s;
}

double walk_cmi(const XorStepDistribution& steps, int t) {
  if (t < 0) throw ValidationError("walk length must be non-negative");
  const auto s = walk_entropy_series(steps, {t, t + 1, t + 2}).values;
  return clamp_information(2 * s.at(t + 1) - s.at(t) - s.at(t + 2)).value;
}

double parity_of_poisson(double lambda) {
  if (!(lambda >= 0)) throw ValidationError("Poisson parameter must be non-negative");
  return -0.5 * std::expm1(-2 * lambda);
}

namespace {

double poisson_rate(const XorStepDistribution& steps, double mu) {
  if (!(mu >= 2)) throw ValidationError("Poissonization parameter mu must be at least 2");
  steps.validate();
  if (steps.d() == 0) return 0;
  return std::log(mu * steps.d());
}

}  // namespace

double poissonized_walk_entropy(const XorStepDistribution& steps, int t, double mu) {
  if (t < 0) throw ValidationError("walk length must be non-negative");
  const double rate = poisson_rate(steps, mu);
  double s = 0;
  for (double w : steps.bit_weights()) s += binary_entropy(parity_of_poisson(t * rate * w));
  return s;
}

WalkEntropySeries poissonized_entropy_series(const XorStepDistribution& steps, const std::vector<int>& ts, double mu) {
  WalkEntropySeries s;
  s.method = WalkMethod::poissonized_analytic;
  for (int t : ts) s.values[t] = poissonized_walk_entropy(steps, t, mu);
  return s;
}

double poissonized_expected_queries(const XorStepDistribution& steps, int t, double mu) {
  return t * steps.d() * poisson_rate(steps, mu);
}

namespace {

double parity_entropy(double x) { return binary_entropy(parity_of_poisson(x)); }

}  // namespace

double walk_f(int t, double p) {
  if (t < 1) throw ValidationError("walk_f needs t >= 1");
  if (p < 0) throw ValidationError("walk_f needs p >= 0");
  return 2 * parity_entropy(t * p) - parity_entropy((t - 1) * p) - parity_entropy((t + 1) * p);
}

double tanh_auxiliary(int t, double q) {
  if (t < 2) throw ValidationError("tanh bound needs t >= 2");
  if (q < 0 || q >= 1) throw ValidationError("tanh bound needs q in [0, 1)");
  if (q == 0) return 0;
  const double a = std::pow(q, t - 1), b = std::pow(q, t + 1);
  return b * (std::atanh(a) / q - std::atanh(b));
}

FBoundSweep f_bound_sweep(const std::vector<int>& t_values, const std::vector<double>& p_grid) {
  FBoundSweep s;
  for (int t : t_values) {
    if (t < 2) throw ValidationError("f-bound sweep needs t >= 2");
    for (double p : p_grid) {
      if (p < 0) throw ValidationError("f-bound sweep needs p >= 0");
      FBoundRow r;
      r.t = t;
      r.p = p;
      r.value = walk_f(t, p);
      if (p <= 1) {
        r.bound = kWalkBoundConstant * p / t;
        if (p > 0) s.max_ratio_linear = std::max(s.max_ratio_linear, r.value / (p / t));
      } else {
        r.bound = kWalkBoundConstant * std::exp(-static_cast<double>(t));
        s.max_ratio_exponential = std::max(s.max_ratio_exponential, r.value / std::exp(-static_cast<double>(t)));
      }
      r.ratio = r.bound > 0 ? r.value / r.bound : 0;
      r.pass = r.value <= r.bound + 1e-15;
      s.pass = s.pass && r.pass;
      s.rows.push_back(r);
    }
  }
  return s;
}

TanhSweep tanh_bound_sweep(const std::vector<int>& t_values, const std::vector<double>& q_grid) {
  TanhSweep s;
  for (int t : t_values)
    for (double q : q_grid) {
      TanhRow r;
      r.t = t;
      r.q = q;
      r.value = tanh_auxiliary(t, q);
      r.bound = 1.0 / (t - 1) + 1.0 / (t + 1);
      r.pass = r.value <= r.bound;
      s.pass = s.pass && r.pass;
      s.rows.push_back(r);
    }
  return s;
}

double binary_entropy_max_second_difference(int points) {
  if (points < 3) throw ValidationError("need at least three grid points");
  const double h = 1.0 / (points - 1);
  double worst = -1e300;
  for (int i = 1; i + 1 < points; ++i)
    worst = std::max(worst, binary_entropy((i - 1) * h) - 2 * binary_entropy(i * h) + binary_entropy((i + 1) * h));
  return worst;
}

std::vector<double> linear_grid(double lo, double step, double hi) {
  if (!(step > 0) || hi < lo) throw ValidationError("grid needs step > 0 and lo <= hi");
  std::vector<double> g;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= count; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

}  // namespace cmilab
