#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mambasod/ssm.hpp"
#include "oracles.hpp"

using namespace mambasod;

namespace {

DiscreteLtiSsm scalar_system(Real a_bar, Real b_bar, Real c) {
  return {Tensor({1}, {a_bar}), Tensor({1}, {b_bar}), Tensor({1}, {c})};
}

LtiSsm random_stable(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> neg(-3.0, -0.01), coef(-1.0, 1.0), step(0.01, 0.5);
  LtiSsm m{Tensor({n}), Tensor({n}), Tensor({n}), step(rng)};
  for (std::size_t i = 0; i < n; ++i) {
    m.a[i] = neg(rng);
    m.b[i] = coef(rng);
    m.c[i] = coef(rng);
  }
  return m;
}

}  // namespace

TEST(Zoh, ScalarClosedForm) {
  const auto [a_bar, b_bar] = zoh_discretize(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), 0.1);
  EXPECT_NEAR(a_bar[0], 0.904837418035959573, 1e-12);
  EXPECT_NEAR(b_bar[0], 0.095162581964040427, 1e-12);
  EXPECT_NEAR(a_bar[0], std::exp(-0.1), 1e-15);
}

TEST(Zoh, SmallStepLimit) {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({8}, rng, -5, -0.1);
  const Tensor b = oracle::random_tensor({8}, rng);
  const Real delta = 1e-9;
  const auto [a_bar, b_bar] = zoh_discretize(a, b, delta);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_LT(std::abs(a_bar[i] - 1), 1e-8);
    EXPECT_LT(std::abs(b_bar[i] - delta * b[i]), 1e-15);
  }
}

TEST(Zoh, ZeroStateMatrixUsesSeries) {
  const auto [a_bar, b_bar] = zoh_discretize(Tensor({2}, {0.0, 0.0}), Tensor({2}, {1.0, -2.0}), 0.25);
  EXPECT_EQ(a_bar[0], 1);
  EXPECT_TRUE(std::isfinite(b_bar[0]));
  EXPECT_DOUBLE_EQ(b_bar[0], 0.25);
  EXPECT_DOUBLE_EQ(b_bar[1], -0.5);
}

TEST(Zoh, BranchesAgreeAtCrossover) {
  // Evaluate the closed form (expm1(x)/x) on either side of the series threshold.
  for (Real x : {-1.0001e-4, -0.9999e-4, 0.9999e-4, 1.0001e-4, -1e-4, 1e-4}) {
    const Real reference = std::expm1(x) / x;
    EXPECT_LT(std::abs(exprel(x) - reference), 1e-12) << x;
  }
  for (Real x : {-1e-5, 3e-6, -5e-5}) EXPECT_NEAR(exprel(x), std::expm1(x) / x, 1e-14);
  EXPECT_EQ(exprel(0), 1);
}

TEST(Zoh, RejectsNonPositiveStep) {
  EXPECT_THROW(zoh_discretize(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), 0.0), std::invalid_argument);
  EXPECT_THROW(zoh_discretize(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), -0.5), std::invalid_argument);
}

TEST(Scan, MemorylessSystemIsIdentity) {
  const Tensor x({4}, {1, -2, 3, 0.5});
  EXPECT_EQ(ssm_scan_recurrent(scalar_system(0, 1, 1), x), x);
}

TEST(Scan, ThreeStepHandRecurrence) {
  const Tensor y = ssm_scan_recurrent(scalar_system(0.5, 1, 1), Tensor({3}, {1, 0, 0}));
  EXPECT_EQ(y, Tensor({3}, {1, 0.5, 0.25}));
}

TEST(Scan, KernelHandValues) {
  EXPECT_EQ(ssm_kernel(scalar_system(0.5, 1, 1), 3), Tensor({3}, {1, 0.5, 0.25}));
  EXPECT_EQ(ssm_kernel(scalar_system(0, 2, 3), 4), Tensor({4}, {6, 0, 0, 0}));
}

TEST(Scan, Superposition) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = discretize(random_stable(rng, 1 + rng() % 8));
    const Tensor x1 = oracle::random_tensor({20}, rng), x2 = oracle::random_tensor({20}, rng);
    const Tensor lhs = ssm_scan_recurrent(m, add(x1, x2));
    const Tensor rhs = add(ssm_scan_recurrent(m, x1), ssm_scan_recurrent(m, x2));
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
    const Tensor scaled = ssm_scan_recurrent(m, scale(x1, 2.5));
    EXPECT_LT(max_abs_diff(scaled, scale(ssm_scan_recurrent(m, x1), 2.5)), 1e-12);
  }
}

TEST(Scan, RecurrenceMatchesConvolution) {
  std::mt19937_64 rng(100);
  double worst = 0;
  for (int sys = 0; sys < 100; ++sys) {
    for (std::size_t n : {1, 4, 16}) {
      const auto m = discretize(random_stable(rng, n));
      for (std::size_t len : {1, 4, 16, 32}) {
        const Tensor x = oracle::random_tensor({len}, rng);
        worst = std::max(worst, static_cast<double>(
                                    max_abs_diff(ssm_scan_recurrent(m, x), causal_convolve(ssm_kernel(m, len), x))));
      }
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Scan, LongSequenceStaysBounded) {
  std::mt19937_64 rng(3);
  const auto m = discretize(random_stable(rng, 16));
  const std::size_t len = 10000;
  const Tensor x = oracle::random_tensor({len}, rng);
  const Tensor y = ssm_scan_recurrent(m, x);
  Real max_a = 0, norm_b = 0, norm_c = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    max_a = std::max(max_a, m.a_bar[i]);
    norm_b += std::abs(m.b_bar[i]);
    norm_c = std::max(norm_c, std::abs(m.c[i]));
  }
  const Real bound = 16 * norm_c * norm_b / (1 - max_a);
  EXPECT_TRUE(all_finite(y));
  for (Real v : y.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Selective, ZeroInputFixedPoint) {
  std::mt19937_64 rng(2);
  auto p = SelectiveSsmParams::zeros(6, 4, 1);
  for (auto* t : {&p.delta_down, &p.delta_up, &p.b_proj, &p.c_proj, &p.d_skip}) *t = oracle::random_tensor(t->shape(), rng);
  for (std::size_t i = 0; i < p.a_log.size(); ++i) p.a_log[i] = std::log(static_cast<Real>(i % 4 + 1));
  const Tensor y = selective_scan(p, Tensor({5, 6}));
  for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(Selective, ConstantProjectionsReduceToLti) {
  std::mt19937_64 rng(6);
  const std::size_t d = 5, n = 4, len = 17;
  auto p = SelectiveSsmParams::zeros(d, n, 1);
  p.a_log = oracle::random_tensor({d, n}, rng, -1, 1);
  p.d_skip = oracle::random_tensor({d}, rng);
  ConstantProjections fz{oracle::random_tensor({d}, rng, 0.05, 0.5), oracle::random_tensor({n}, rng),
                         oracle::random_tensor({n}, rng)};
  p.frozen = fz;
  const Tensor x = oracle::random_tensor({len, d}, rng);
  const Tensor y = selective_scan(p, x);
  const Tensor a = negative_exp(p.a_log);
  for (std::size_t c = 0; c < d; ++c) {
    Tensor ad({n}), xc({len});
    for (std::size_t k = 0; k < n; ++k) ad[k] = a(c, k);
    for (std::size_t l = 0; l < len; ++l) xc[l] = x(l, c);
    const auto m = discretize({ad, fz.b, fz.c, fz.delta[c]});
    const Tensor ref = ssm_scan_recurrent(m, xc);
    for (std::size_t l = 0; l < len; ++l) EXPECT_LT(std::abs(y(l, c) - (ref[l] + p.d_skip[c] * xc[l])), 1e-12);
  }
}

TEST(Selective, SingleTokenHandStep) {
  // D = 1, N = 2, rank 1; every projection picked by hand.
  auto p = SelectiveSsmParams::zeros(1, 2, 1);
  p.a_log = Tensor({1, 2}, {0.0, std::log(2.0)});  // A = [-1, -2]
  p.delta_down = Tensor({1, 1}, {1.0});
  p.delta_up = Tensor({1, 1}, {0.5});
  p.delta_bias = Tensor({1}, {0.1});
  p.b_proj = Tensor({2, 1}, {1.0, -0.5});
  p.c_proj = Tensor({2, 1}, {2.0, 1.0});
  p.d_skip = Tensor({1}, {0.3});
  const Real x = 0.8;
  const Tensor y = selective_scan(p, Tensor({1, 1}, {x}));

  const Real delta = std::log1p(std::exp(0.5 * x + 0.1));
  const Real b[2] = {x, -0.5 * x}, c[2] = {2 * x, x}, a[2] = {-1, -2};
  Real expected = 0.3 * x;
  for (int k = 0; k < 2; ++k) {
    const Real b_bar = (std::exp(delta * a[k]) - 1) / a[k] * b[k];
    expected += c[k] * b_bar * x;
  }
  EXPECT_NEAR(y[0], expected, 1e-14);
}

TEST(Selective, StepAlwaysPositiveAndOutputFinite) {
  std::mt19937_64 rng(15);
  auto p = SelectiveSsmParams::zeros(8, 4, 1);
  for (auto* t : {&p.delta_down, &p.delta_up, &p.b_proj, &p.c_proj}) *t = oracle::random_tensor(t->shape(), rng, -3, 3);
  const Tensor x = oracle::random_tensor({200, 8}, rng, -50, 50);
  EXPECT_TRUE(all_finite(selective_scan(p, x)));
  const Tensor a = negative_exp(p.a_log);
  for (Real v : a.data()) EXPECT_LT(v, 0);
}

TEST(Selective, WidthMismatchThrows) {
  EXPECT_THROW(selective_scan(SelectiveSsmParams::zeros(4, 2, 1), Tensor({3, 5})), DimensionError);
}
