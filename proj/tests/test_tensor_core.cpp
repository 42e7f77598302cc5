#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mambasod/ops.hpp"
#include "mambasod/tensor.hpp"
#include "oracles.hpp"

using namespace mambasod;

TEST(Tensor, LayoutIsRowMajorCHW) {
  Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(i);
  EXPECT_EQ(t(1, 2, 3), static_cast<Real>((1 * 3 + 2) * 4 + 3));
  EXPECT_EQ(t(0, 1, 0), 4);
}

TEST(Tensor, RejectsZeroExtentsAndBadData) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<Real>(3)), DimensionError);
  EXPECT_THROW(Tensor({4}).reshaped({3}), DimensionError);
}

TEST(Linear, IdentityMap) {
  const Tensor x({1, 2}, {1, 2});
  const Tensor w({2, 2}, {1, 0, 0, 1});
  const Tensor b({2});
  EXPECT_EQ(linear(x, w, b), x);
}

TEST(Linear, Arithmetic) {
  const Tensor y = linear(Tensor({1, 2}, {1, 1}), Tensor({1, 2}, {1, 1}), Tensor({1}, {0.5}));
  EXPECT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y[0], 2.5);
}

TEST(Linear, MatchesNaiveLoopExactly) {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  const Tensor w = oracle::random_tensor({5, 4}, rng);
  const Tensor b = oracle::random_tensor({5}, rng);
  EXPECT_EQ(linear(x, w, b), oracle::naive_linear(x, w, b));
}

TEST(Linear, PropertyRandomShapesExact) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 1 + rng() % 8, cin = 1 + rng() % 8, cout = 1 + rng() % 8;
    const Tensor x = oracle::random_tensor({L, cin}, rng);
    const Tensor w = oracle::random_tensor({cout, cin}, rng);
    const Tensor b = oracle::random_tensor({cout}, rng);
    ASSERT_EQ(linear(x, w, b), oracle::naive_linear(x, w, b)) << "trial " << trial;
  }
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  try {
    linear(Tensor({2, 3}), Tensor({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
}

TEST(Conv2d, OneByOneUnitKernelIsIdentity) {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({1, 5, 6}, rng);
  EXPECT_EQ(conv2d(x, Tensor({1, 1, 1, 1}, 1.0), nullptr), x);
}

TEST(Conv2d, AllOnesCountsOverlaps) {
  const Tensor y = conv2d(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 3, 3}, 1.0), nullptr, {1, 1, 1});
  EXPECT_EQ(y(0, 1, 1), 9);
  EXPECT_EQ(y(0, 0, 0), 4);
  EXPECT_EQ(y(0, 0, 2), 4);
  EXPECT_EQ(y(0, 2, 0), 4);
  EXPECT_EQ(y(0, 2, 2), 4);
  EXPECT_EQ(y(0, 0, 1), 6);
}

TEST(Conv2d, GroupedMatchesNaiveOracle) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({4, 7, 6}, rng);
  const Tensor k = oracle::random_tensor({6, 2, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({6}, rng);
  const Tensor y = conv2d(x, k, b, {1, 1, 2});
  EXPECT_LT(max_abs_diff(y, oracle::naive_conv2d(x, k, b, 1, 1, 2)), 1e-12);
}

TEST(Conv2d, PropertyRandomConfigurations) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t groups = 1 + rng() % 2;
    const std::size_t cin = groups * (1 + rng() % 4), cout = groups * (1 + rng() % 4);
    const std::size_t k = 1 + rng() % 3, stride = 1 + rng() % 2, pad = rng() % 2;
    const std::size_t h = k + rng() % 7, w = k + rng() % 7;
    const Tensor x = oracle::random_tensor({cin, h, w}, rng);
    const Tensor kern = oracle::random_tensor({cout, cin / groups, k, k}, rng);
    const Tensor b = oracle::random_tensor({cout}, rng);
    const Tensor y = conv2d(x, kern, b, {stride, pad, groups});
    ASSERT_LT(max_abs_diff(y, oracle::naive_conv2d(x, kern, b, stride, pad, groups)), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, DepthwiseIsPerChannel) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({3, 5, 5}, rng);
  const Tensor k = oracle::random_tensor({3, 1, 3, 3}, rng);
  const Tensor y = conv2d(x, k, nullptr, {1, 1, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor xc({1, 5, 5}), kc({1, 1, 3, 3});
    std::copy_n(x.raw() + c * 25, 25, xc.raw());
    std::copy_n(k.raw() + c * 9, 9, kc.raw());
    const Tensor yc = conv2d(xc, kc, nullptr, {1, 1, 1});
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(y[c * 25 + i], yc[i]);
  }
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(conv2d(Tensor({3, 4, 4}), Tensor({2, 1, 3, 3}), nullptr, {1, 0, 2}), DimensionError);
  EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), nullptr, {1, 0, 1}), DimensionError);
}

TEST(LayerNorm, ConstantRowCollapsesToZero) {
  const Tensor y = layer_norm(Tensor({1, 3}, 5.0), Tensor({3}, 1.0), Tensor({3}));
  for (Real v : y.data()) EXPECT_EQ(v, 0);
}

TEST(LayerNorm, SymmetricPair) {
  const Tensor y = layer_norm(Tensor({1, 2}, {1, -1}), Tensor({2}, 1.0), Tensor({2}));
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
  EXPECT_DOUBLE_EQ(y[0], -y[1]);
}

TEST(LayerNorm, PropertyOutputMoments) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c = 2 + rng() % 63;
    const Tensor x = oracle::random_tensor({3, c}, rng, -5, 5);
    const Tensor y = layer_norm(x, Tensor({c}, 1.0), Tensor({c}));
    for (std::size_t l = 0; l < 3; ++l) {
      Real mean = 0, var = 0;
      for (std::size_t i = 0; i < c; ++i) mean += y(l, i);
      mean /= static_cast<Real>(c);
      for (std::size_t i = 0; i < c; ++i) var += (y(l, i) - mean) * (y(l, i) - mean);
      var /= static_cast<Real>(c);
      EXPECT_LT(std::abs(mean), 1e-12);
      EXPECT_GE(var, 1 - 10 * kLayerNormEps);
      EXPECT_LE(var, 1.0 + 1e-12);
    }
  }
}

TEST(LayerNorm, HalfSwapIsBitExact) {
  std::mt19937_64 rng(2);
  const std::size_t c = 24;
  const Tensor a = oracle::random_tensor({3, c}, rng), b = oracle::random_tensor({3, c}, rng);
  const Tensor g = oracle::random_tensor({2 * c}, rng), be = oracle::random_tensor({2 * c}, rng);
  Tensor g_sw({2 * c}), be_sw({2 * c});
  for (std::size_t i = 0; i < c; ++i) {
    g_sw[i] = g[c + i];
    g_sw[c + i] = g[i];
    be_sw[i] = be[c + i];
    be_sw[c + i] = be[i];
  }
  const Tensor y = layer_norm(concat_features(a, b), g, be);
  const Tensor y_sw = layer_norm(concat_features(b, a), g_sw, be_sw);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < c; ++i) {
      EXPECT_EQ(y(l, i), y_sw(l, c + i));
      EXPECT_EQ(y(l, c + i), y_sw(l, i));
    }
  }
}

TEST(Activation, FixedPoints) {
  EXPECT_EQ(silu(0), 0);
  EXPECT_EQ(sigmoid(0), 0.5);
  EXPECT_EQ(relu(-3), 0);
  EXPECT_EQ(relu(2.5), 2.5);
}

TEST(Activation, SoftplusOverflowSafe) {
  EXPECT_NEAR(softplus(100), 100, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1000)));
  // Below the branch point the direct formula is representable and must agree.
  for (Real x : {-20.0, -1.0, 0.0, 0.5, 10.0, 29.9}) EXPECT_NEAR(softplus(x), std::log1p(std::exp(x)), 1e-15);
  EXPECT_NEAR(softplus(30.5), 30.5 + std::log1p(std::exp(-30.5)), 1e-12);
  EXPECT_EQ(softplus(0), std::log(2.0));
}

TEST(Activation, TensorIsElementwise) {
  const Tensor x({3}, {-1, 0, 2});
  const Tensor y = activation(x, Activation::sigmoid);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y[i], sigmoid(x[i]));
}

TEST(Upsample, ConstantPlane) {
  const Tensor y = upsample_bilinear_x2(Tensor({1, 3, 3}, 7.0));
  EXPECT_EQ(y, Tensor({1, 6, 6}, 7.0));
}

TEST(Upsample, SinglePixel) { EXPECT_EQ(upsample_bilinear_x2(Tensor({1, 1, 1}, 5.0)), Tensor({1, 2, 2}, 5.0)); }

TEST(Upsample, LinearRampMatchesClosedForm) {
  // x[j] = j along width. Half-pixel mapping: src = (o + 0.5)/2 - 0.5 clamped to [0, W-1].
  const std::size_t W = 5;
  Tensor x({1, 1, W});
  for (std::size_t j = 0; j < W; ++j) x(0, 0, j) = static_cast<Real>(j);
  const Tensor y = upsample_bilinear_x2(x);
  for (std::size_t o = 0; o < 2 * W; ++o) {
    const Real src = std::clamp((static_cast<Real>(o) + 0.5) / 2 - 0.5, 0.0, static_cast<Real>(W - 1));
    EXPECT_DOUBLE_EQ(y(0, 0, o), src);
    EXPECT_DOUBLE_EQ(y(0, 1, o), src);
  }
  // Interior slope is half a unit per output index.
  for (std::size_t o = 1; o + 2 < 2 * W; ++o) EXPECT_DOUBLE_EQ(y(0, 0, o + 1) - y(0, 0, o), 0.5);
}

TEST(Concat, TwoScalarsAlongChannels) {
  const Tensor y = concat_channels(Tensor({1, 1, 1}, 1.0), Tensor({1, 1, 1}, 2.0));
  EXPECT_EQ(y, Tensor({2, 1, 1}, {1, 2}));
}

TEST(Concat, SplitRoundTrip) {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({3, 4, 2}, rng), b = oracle::random_tensor({2, 4, 2}, rng);
  const auto [a2, b2] = split_channels(concat_channels(a, b), 3);
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
}

TEST(Concat, SelectorKernelRecoversFirstBlock) {
  std::mt19937_64 rng(8);
  const std::size_t ca = 3, cb = 2;
  const Tensor x = oracle::random_tensor({ca, 4, 5}, rng);
  Tensor selector({ca, ca + cb, 1, 1});
  for (std::size_t c = 0; c < ca; ++c) selector.raw()[c * (ca + cb) + c] = 1;
  EXPECT_EQ(conv2d(concat_channels(x, Tensor({cb, 4, 5})), selector, nullptr), x);
}

TEST(Concat, SpatialMismatch) {
  EXPECT_THROW(concat_channels(Tensor({1, 2, 2}), Tensor({1, 2, 3})), DimensionError);
}

TEST(Layout, TokensGridRoundTrip) {
  std::mt19937_64 rng(6);
  const Tensor g = oracle::random_tensor({4, 3, 5}, rng);
  const Tensor t = grid_to_tokens(g);
  EXPECT_EQ(t(2 * 5 + 1, 3), g(3, 2, 1));
  EXPECT_EQ(tokens_to_grid(t, 3, 5), g);
}

TEST(Ops, PureAndRepeatable) {
  std::mt19937_64 rng(12);
  const Tensor x = oracle::random_tensor({2, 6, 6}, rng);
  const Tensor k = oracle::random_tensor({2, 2, 3, 3}, rng);
  const Tensor first = conv2d(x, k, nullptr, {1, 1, 1});
  (void)upsample_bilinear_x2(x);
  EXPECT_EQ(conv2d(x, k, nullptr, {1, 1, 1}), first);
}
