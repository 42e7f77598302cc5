#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mambasod/backbone.hpp"
#include "mambasod/ops.hpp"
#include "mambasod/params.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

/// Number of supervised prediction maps: one per refined level plus the coarsest raw level.
inline constexpr std::size_t kNumPredictions = kNumStages + 1;

struct MrStageWeights {
  ConvWeights lateral;  // 1x1, C_{i+1} -> C_i, after upsampling
  ConvWeights reduce;   // 1x1, 2C_i -> C_i on the concatenation branch
  ConvWeights merge;    // 3x3, C_i -> C_i, followed by ReLU
  ConvWeights final;    // 1x1, C_i -> C_i

  MrStageWeights(std::size_t coarse_channels, std::size_t channels)
      : lateral(ConvWeights::pointwise(coarse_channels, channels)),
        reduce(ConvWeights::pointwise(2 * channels, channels)),
        merge(ConvWeights::same3x3(channels, channels)),
        final(ConvWeights::pointwise(channels, channels)) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    ConvWeights::for_each(self.lateral, p + "lateral.", f);
    ConvWeights::for_each(self.reduce, p + "reduce.", f);
    ConvWeights::for_each(self.merge, p + "merge.", f);
    ConvWeights::for_each(self.final, p + "final.", f);
  }
};

/// 1x1 projection to one channel; upsampling and sigmoid follow in predict().
struct HeadWeights {
  ConvWeights proj;

  explicit HeadWeights(std::size_t channels) : proj(ConvWeights::pointwise(channels, 1)) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    ConvWeights::for_each(self.proj, p + "proj.", f);
  }
};

struct DecoderWeights {
  std::vector<MrStageWeights> refine;  // refine[i] fuses level i+1 into level i, i = 0..2
  std::vector<HeadWeights> heads;      // heads[0..3] on refined levels, heads[4] on the raw coarsest level

  explicit DecoderWeights(const std::array<std::size_t, kNumStages>& channels) {
    for (std::size_t i = 0; i + 1 < kNumStages; ++i) refine.emplace_back(channels[i + 1], channels[i]);
    for (std::size_t i = 0; i < kNumStages; ++i) heads.emplace_back(channels[i]);
    heads.emplace_back(channels[kNumStages - 1]);
  }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    for (std::size_t i = 0; i < self.refine.size(); ++i) {
      MrStageWeights::for_each(self.refine[i], p + "mr" + std::to_string(i + 1) + ".", f);
    }
    for (std::size_t i = 0; i < self.heads.size(); ++i) {
      HeadWeights::for_each(self.heads[i], p + "head" + std::to_string(i + 1) + ".", f);
    }
  }
};

/// Multi-level refinement of a finer feature map by an upsampled coarser one.
inline Tensor mr_refine(const Tensor& coarse, const Tensor& fine, const MrStageWeights& w) {
  require_rank(coarse, 3, "mr_refine coarse");
  require_rank(fine, 3, "mr_refine fine");
  if (fine.dim(1) != 2 * coarse.dim(1) || fine.dim(2) != 2 * coarse.dim(2)) {
    throw DimensionError("mr_refine: fine map " + shape_str(fine.shape()) + " is not twice the extent of " +
                         shape_str(coarse.shape()));
  }
  if (w.lateral.kernel.dim(1) != coarse.dim(0) || w.lateral.kernel.dim(0) != fine.dim(0)) {
    throw DimensionError("mr_refine: channel mismatch between " + shape_str(coarse.shape()) + " and " +
                         shape_str(fine.shape()));
  }
  const Tensor up = w.lateral.apply(upsample_bilinear_x2(coarse));
  const Tensor branch_mul = multiply(up, fine);
  const Tensor branch_cat = w.reduce.apply(concat_channels(up, fine));
  Tensor merged = w.merge.apply(add(branch_mul, branch_cat));
  activation_inplace(merged, Activation::relu);
  return w.final.apply(merged);
}

/// Saliency probability map at full resolution: sigmoid(resize(conv1x1(features))).
inline Tensor predict(const Tensor& features, const HeadWeights& w, std::size_t out_h, std::size_t out_w) {
  Tensor logits = w.proj.apply(features);
  if (logits.dim(1) != out_h || logits.dim(2) != out_w) logits = resize_bilinear(logits, out_h, out_w);
  activation_inplace(logits, Activation::sigmoid);
  return logits;
}

struct DecoderOutput {
  std::vector<Tensor> levels;  // P_1..P_5, each [1,H,W]
  Tensor final;                // == levels[0]
};

inline DecoderOutput decode(const PyramidFeatures& fused, const DecoderWeights& w, std::size_t out_h,
                            std::size_t out_w) {
  if (fused.size() != kNumStages) {
    throw DimensionError("decode: expected " + std::to_string(kNumStages) + " fused stages, got " +
                         std::to_string(fused.size()));
  }
  std::vector<Tensor> refined(kNumStages);
  refined[kNumStages - 1] = fused[kNumStages - 1];
  for (std::size_t i = kNumStages - 1; i-- > 0;) refined[i] = mr_refine(refined[i + 1], fused[i], w.refine[i]);

  DecoderOutput out;
  for (std::size_t i = 0; i < kNumStages; ++i) out.levels.push_back(predict(refined[i], w.heads[i], out_h, out_w));
  out.levels.push_back(predict(fused[kNumStages - 1], w.heads[kNumStages], out_h, out_w));
  out.final = out.levels[0];
  return out;
}

/// Full resolution inferred from the finest level and a patch size of 4.
inline DecoderOutput decode(const PyramidFeatures& fused, const DecoderWeights& w) {
  if (fused.size() == 0) throw DimensionError("decode: empty pyramid");
  return decode(fused, w, 4 * fused[0].dim(1), 4 * fused[0].dim(2));
}

}  // namespace mambasod
