#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cmilab/attacks.hpp"
#include "cmilab/errors.hpp"
#include "cmilab/qentropy.hpp"
#include "cmilab/xorwalk.hpp"

using namespace cmilab;

namespace {

XorDistribution direct_convolution(const XorDistribution& a, const XorDistribution& b) {
  XorDistribution out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i ^ j] += a[i] * b[j];
  return out;
}

XorDistribution random_distribution_of(std::size_t size, Rng& rng) {
  XorDistribution v(size);
  double s = 0;
  for (auto& x : v) s += (x = rng.uniform());
  for (auto& x : v) x /= s;
  return v;
}

double max_diff(const XorDistribution& a, const XorDistribution& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

XorStepDistribution random_steps(int n, int d, Rng& rng) {
  XorStepDistribution s;
  s.n = n;
  for (int l = 0; l < d; ++l) s.components.push_back(random_distribution_of((std::size_t{1} << n) + 1, rng));
  return s;
}

// Sum over odd k of e^{-lambda} lambda^k / k!, up to k = 60.
double odd_poisson_series(double lambda) {
  double term = std::exp(-lambda), s = 0;
  for (int k = 1; k <= 60; ++k) {
    term *= lambda / k;
    if (k % 2 == 1) s += term;
  }
  return s;
}

// Poisson(lambda) mixture of XOR powers, truncated at lambda + 10 sqrt(lambda).
XorDistribution poisson_mixture(const XorDistribution& step, double lambda) {
  XorDistribution out(step.size(), 0.0);
  const int kmax = static_cast<int>(std::ceil(lambda + 10 * std::sqrt(lambda))) + 10;
  double w = std::exp(-lambda);
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) w *= lambda / k;
    const auto p = xor_power(step, k);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * p[i];
  }
  return out;
}

}  // namespace

TEST_CASE("XOR convolution") {
  Rng rng(1);
  const auto a = random_distribution_of(8, rng);
  XorDistribution delta(8, 0.0);
  delta[0] = 1;
  CHECK(max_diff(xor_convolve(a, delta), a) < 1e-15);
  const XorDistribution uniform(8, 1.0 / 8);
  CHECK(max_diff(xor_convolve(uniform, a), uniform) < 1e-15);

  for (std::size_t size : {4u, 16u, 256u}) {
    const auto x = random_distribution_of(size, rng), y = random_distribution_of(size, rng);
    const auto c = xor_convolve(x, y);
    CHECK(max_diff(c, direct_convolution(x, y)) < 1e-12);
    CHECK(std::abs(std::accumulate(c.begin(), c.end(), 0.0) - 1) < 1e-10);
  }

  auto v = random_distribution_of(64, rng);
  auto w = v;
  wht(w);
  wht(w);
  for (auto& z : w) z /= 64;
  CHECK(max_diff(v, w) < 1e-12);

  CHECK_THROWS_AS(xor_convolve(XorDistribution(4, 0.25), XorDistribution(8, 0.125)), ValidationError);
  XorDistribution bad(6, 1.0 / 6);
  CHECK_THROWS_AS(wht(bad), ValidationError);
  XorDistribution big(std::size_t{1} << 17, 0.0);
  CHECK_THROWS_AS(wht(big), CapError);
}

TEST_CASE("XOR powers match repeated convolution") {
  Rng rng(2);
  const auto a = random_distribution_of(16, rng);
  XorDistribution acc(16, 0.0);
  acc[0] = 1;
  for (int t = 0; t <= 6; ++t) {
    CHECK(max_diff(xor_power(a, t), acc) < 1e-12);
    acc = direct_convolution(acc, a);
  }
}

TEST_CASE("step distributions") {
  XorStepDistribution s{1, {{0.5, 0.25, 0.25}}};
  const auto d = s.distribution();
  CHECK(d == XorDistribution{0.5, 0.25, 0.25, 0.0});
  CHECK(s.bit_weights() == std::vector<double>{0.25, 0.25});
  CHECK_THROWS_AS((XorStepDistribution{1, {{0.5, 0.25}}}.validate()), ValidationError);
  CHECK_THROWS_AS((XorStepDistribution{1, {{0.5, 0.25, 0.3}}}.validate()), ValidationError);
  CHECK_THROWS_AS((XorStepDistribution{5, {}}.validate()), CapError);
}

TEST_CASE("walk CMI examples") {
  const XorStepDistribution point{1, {{1.0, 0.0, 0.0}}};
  for (int t = 0; t <= 5; ++t) CHECK(walk_cmi(point, t) == 0);

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_steps(1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(2)), rng);
    std::vector<int> ts(10);
    std::iota(ts.begin(), ts.end(), 0);
    const auto ent = walk_entropy_series(s, ts).values;
    for (int t = 1; t < 10; ++t) CHECK(ent.at(t) >= ent.at(t - 1) - 1e-12);
    for (int t = 1; t < 8; ++t) CHECK(walk_cmi(s, t + 1) <= walk_cmi(s, t) + 1e-12);
    for (int t = 0; t < 8; ++t) CHECK(walk_cmi(s, t) >= -1e-8);
  }
}

TEST_CASE("walk CMI equals the quantum CMI of the non-adaptive protocol") {
  struct Case {
    int n;
    std::vector<std::vector<double>> components;
  };
  const std::vector<Case> cases{{1, {{0.5, 0.25, 0.25}}},
                                {1, {{0.2, 0.7, 0.1}, {0.6, 0.1, 0.3}}},
                                {2, {{0.4, 0.3, 0.1, 0.1, 0.1}}}};
  for (const auto& c : cases) {
    const auto spec = make_protocol("nonadaptive", {{"n", c.n}, {"components", c.components}});
    const auto report = eve_repeat_and_recover(spec, RepeatOptions{3, {0.0}});
    const auto quantum = report.details["pre_message_cmi"].get<std::vector<double>>();
    REQUIRE(quantum.size() == 4);
    const XorStepDistribution steps{c.n, c.components};
    for (int t = 0; t <= 3; ++t) CHECK(std::abs(walk_cmi(steps, t) - quantum[static_cast<std::size_t>(t)]) <= 1e-6);
  }
}

TEST_CASE("Poisson parity") {
  CHECK(parity_of_poisson(0) == 0);
  CHECK(std::abs(parity_of_poisson(50) - 0.5) <= 1e-10);
  for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0})
    CHECK(std::abs(parity_of_poisson(lambda) - odd_poisson_series(lambda)) <= 1e-12);
  CHECK_THROWS_AS(parity_of_poisson(-1), ValidationError);
}

TEST_CASE("Poissonized walk entropy") {
  const XorStepDistribution silent{2, {{1.0, 0.0, 0.0, 0.0, 0.0}}};
  CHECK(poissonized_walk_entropy(silent, 5, 2) == 0);
  const XorStepDistribution single{0, {{0.0, 1.0}}};
  CHECK(poissonized_walk_entropy(single, 40, 2) == doctest::Approx(1).epsilon(1e-12));
  CHECK_THROWS_AS(poissonized_walk_entropy(single, 1, 1.5), ValidationError);

  // Each component is drawn Poisson(t ln(mu d)) times; the walk is the XOR of all draws.
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    const auto s = random_steps(2, 1 + static_cast<int>(rng.below(2)), rng);
    const double mu = 2 + rng.uniform() * 3;
    for (int t : {1, 2, 3}) {
      const double lambda = t * std::log(mu * s.d());
      XorDistribution acc(16, 0.0);
      acc[0] = 1;
      for (const auto& comp : s.components) {
        XorStepDistribution one{2, {comp}};
        acc = xor_convolve(acc, poisson_mixture(one.distribution(), lambda));
      }
      CHECK(std::abs(poissonized_walk_entropy(s, t, mu) - shannon_entropy(acc)) <= 1e-6);
    }
    CHECK(poissonized_expected_queries(s, 3, mu) == doctest::Approx(3 * s.d() * std::log(mu * s.d())));
  }
}

TEST_CASE("analytic walk bounds") {
  CHECK(walk_f(4, 0) == 0);
  CHECK(walk_f(4, 0.5) <= 8 * 0.125);

  const std::vector<int> ts{2, 4, 8, 16, 32, 64};
  const auto linear = f_bound_sweep(ts, linear_grid(0, 0.01, 1));
  CHECK(linear.pass);
  CHECK(linear.rows.size() == ts.size() * 101);
  CHECK(linear.max_ratio_linear > 0);
  CHECK(linear.max_ratio_linear <= kWalkBoundConstant);
  for (const auto& r : linear.rows) CHECK(r.value <= kWalkBoundConstant * r.p / r.t + 1e-15);

  const auto tail = f_bound_sweep(ts, linear_grid(1.01, 0.01, 10));
  CHECK(tail.pass);

  const auto tanh = tanh_bound_sweep({2, 3, 4, 8, 16, 64}, linear_grid(0, 0.001, 0.999));
  CHECK(tanh.pass);
  CHECK(tanh_auxiliary(2, 0) == 0);
  CHECK_THROWS_AS(tanh_auxiliary(1, 0.5), ValidationError);
  CHECK_THROWS_AS(tanh_auxiliary(3, 1.0), ValidationError);

  CHECK(binary_entropy_max_second_difference(10001) <= 1e-12);
  CHECK(linear_grid(0, 0.01, 1).size() == 101);
  CHECK(linear_grid(0, 0.01, 1).back() == doctest::Approx(1));
}
