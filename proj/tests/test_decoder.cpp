#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mambasod/decoder.hpp"
#include "mambasod/metrics.hpp"
#include "oracles.hpp"

using namespace mambasod;

namespace {

const std::array<std::size_t, kNumStages> kDesk{16, 32, 64, 128};

PyramidFeatures zero_pyramid(std::size_t h, std::size_t w) {
  PyramidFeatures p;
  for (std::size_t i = 0; i < kNumStages; ++i) p.levels.emplace_back(Shape{kDesk[i], h >> i, w >> i});
  return p;
}

PyramidFeatures random_pyramid(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  PyramidFeatures p;
  for (std::size_t i = 0; i < kNumStages; ++i) p.levels.push_back(oracle::random_tensor({kDesk[i], h >> i, w >> i}, rng));
  return p;
}

}  // namespace

TEST(MrRefine, DeskShape) {
  MrStageWeights w(32, 16);
  init_params(w, 1);
  std::mt19937_64 rng(2);
  const Tensor y = mr_refine(oracle::random_tensor({32, 8, 8}, rng), oracle::random_tensor({16, 16, 16}, rng), w);
  EXPECT_EQ(y.shape(), (Shape{16, 16, 16}));
}

TEST(MrRefine, ZeroCoarseDependsOnlyOnFine) {
  MrStageWeights w(32, 16);
  init_params(w, 3);
  std::mt19937_64 rng(4);
  const Tensor fine = oracle::random_tensor({16, 8, 8}, rng);
  // U = 0, so the concatenation branch sees [0, F] and the product branch vanishes.
  Tensor merged = w.merge.apply(w.reduce.apply(concat_channels(Tensor({16, 8, 8}), fine)));
  activation_inplace(merged, Activation::relu);
  EXPECT_EQ(mr_refine(Tensor({32, 4, 4}), fine, w), w.final.apply(merged));
}

TEST(MrRefine, MismatchThrows) {
  MrStageWeights w(32, 16);
  EXPECT_THROW(mr_refine(Tensor({32, 4, 4}), Tensor({16, 6, 8}), w), DimensionError);
  EXPECT_THROW(mr_refine(Tensor({24, 4, 4}), Tensor({16, 8, 8}), w), DimensionError);
}

TEST(Decode, ZeroPyramidGivesHalfEverywhere) {
  DecoderWeights w(kDesk);
  init_params(w, 5);
  const auto out = decode(zero_pyramid(16, 16), w);
  ASSERT_EQ(out.levels.size(), kNumPredictions);
  for (const auto& p : out.levels) {
    EXPECT_EQ(p.shape(), (Shape{1, 64, 64}));
    for (Real v : p.data()) ASSERT_EQ(v, 0.5);
  }
  EXPECT_EQ(out.final, out.levels[0]);
  EXPECT_NEAR(total_loss(out.levels, Tensor({1, 64, 64})), 5 * std::log(2.0), 1e-12);
}

TEST(Decode, OutputsInsideUnitInterval) {
  DecoderWeights w(kDesk);
  init_params(w, 6);
  std::mt19937_64 rng(7);
  const auto out = decode(random_pyramid(8, 8, rng), w, 32, 32);
  for (const auto& p : out.levels) {
    EXPECT_EQ(p.shape(), (Shape{1, 32, 32}));
    for (Real v : p.data()) {
      ASSERT_GT(v, 0);
      ASSERT_LT(v, 1);
    }
  }
}

TEST(Decode, DeterministicAndPure) {
  DecoderWeights w(kDesk);
  init_params(w, 8);
  std::mt19937_64 rng(9);
  const auto p = random_pyramid(8, 8, rng);
  const auto a = decode(p, w), b = decode(p, w);
  EXPECT_EQ(a.levels, b.levels);
}

TEST(Decode, WrongStageCountThrows) {
  DecoderWeights w(kDesk);
  PyramidFeatures p = zero_pyramid(8, 8);
  p.levels.pop_back();
  EXPECT_THROW(decode(p, w), DimensionError);
}

TEST(Predict, ResizesToRequestedExtent) {
  HeadWeights h(4);
  init_params(h, 10);
  const Tensor y = predict(Tensor({4, 3, 3}, 0.2), h, 12, 12);
  EXPECT_EQ(y.shape(), (Shape{1, 12, 12}));
  // Constant features stay constant through bilinear resize.
  for (Real v : y.data()) EXPECT_EQ(v, y[0]);
}
