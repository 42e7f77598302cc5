#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mambasod/ops.hpp"
#include "mambasod/params.hpp"
#include "mambasod/ss2d.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

inline constexpr std::size_t kNumStages = 4;

/// Geometry of one encoder stream.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::array<std::size_t, kNumStages> stage_channels{96, 192, 384, 768};
  std::array<std::size_t, kNumStages> blocks_per_stage{2, 2, 9, 2};
  std::size_t patch_size = 4;
  std::size_t state_dim = 16;
  std::size_t expansion = 2;  // SS2D branch width = expansion * C
  std::size_t ffn_ratio = 4;

  static BackboneConfig full(std::size_t in_channels) {
    BackboneConfig cfg;
    cfg.in_channels = in_channels;
    return cfg;
  }

  static BackboneConfig desk(std::size_t in_channels) {
    BackboneConfig cfg;
    cfg.in_channels = in_channels;
    cfg.stage_channels = {16, 32, 64, 128};
    cfg.blocks_per_stage = {1, 1, 2, 1};
    return cfg;
  }

  /// Total spatial reduction between the input and the coarsest stage.
  std::size_t total_stride() const { return patch_size << (kNumStages - 1); }

  void validate() const {
    if (in_channels == 0 || patch_size == 0 || state_dim == 0 || expansion == 0 || ffn_ratio == 0) {
      throw std::invalid_argument("BackboneConfig: all extents must be >= 1");
    }
    for (std::size_t i = 0; i + 1 < kNumStages; ++i) {
      if (stage_channels[i + 1] != 2 * stage_channels[i]) {
        throw std::invalid_argument("BackboneConfig: stage channels must double stage to stage");
      }
    }
  }
};

struct VmBlockWeights {
  LayerNormWeights ln1;
  LinearWeights in_proj;
  ConvWeights dw_conv;
  Ss2dParams ss2d;
  LayerNormWeights ln2;
  LinearWeights out_proj;
  LayerNormWeights ln3;
  LinearWeights ffn_in;
  LinearWeights ffn_out;

  VmBlockWeights(std::size_t channels, std::size_t expansion, std::size_t ffn_ratio, std::size_t state_dim)
      : ln1(channels),
        in_proj(channels, expansion * channels),
        dw_conv(ConvWeights::depthwise3x3(expansion * channels)),
        ss2d(make_ss2d_params(expansion * channels, state_dim)),
        ln2(expansion * channels),
        out_proj(expansion * channels, channels),
        ln3(channels),
        ffn_in(channels, ffn_ratio * channels),
        ffn_out(ffn_ratio * channels, channels) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    LayerNormWeights::for_each(self.ln1, p + "ln1.", f);
    LinearWeights::for_each(self.in_proj, p + "in_proj.", f);
    ConvWeights::for_each(self.dw_conv, p + "dw_conv.", f);
    for_each_ss2d(self.ss2d, p + "ss2d.", f);
    LayerNormWeights::for_each(self.ln2, p + "ln2.", f);
    LinearWeights::for_each(self.out_proj, p + "out_proj.", f);
    LayerNormWeights::for_each(self.ln3, p + "ln3.", f);
    LinearWeights::for_each(self.ffn_in, p + "ffn_in.", f);
    LinearWeights::for_each(self.ffn_out, p + "ffn_out.", f);
  }
};

struct PatchEmbedWeights {
  ConvWeights proj;
  LayerNormWeights norm;

  PatchEmbedWeights(std::size_t in_channels, std::size_t channels, std::size_t patch)
      : proj(in_channels, channels, patch, {patch, 0, 1}), norm(channels) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    ConvWeights::for_each(self.proj, p + "proj.", f);
    LayerNormWeights::for_each(self.norm, p + "norm.", f);
  }
};

struct PatchMergeWeights {
  LayerNormWeights norm;
  LinearWeights reduction;

  explicit PatchMergeWeights(std::size_t channels)
      : norm(4 * channels), reduction(4 * channels, 2 * channels, /*with_bias=*/false) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    LayerNormWeights::for_each(self.norm, p + "norm.", f);
    LinearWeights::for_each(self.reduction, p + "reduction.", f);
  }
};

struct StageWeights {
  std::optional<PatchMergeWeights> downsample;
  std::vector<VmBlockWeights> blocks;

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    if (self.downsample) PatchMergeWeights::for_each(*self.downsample, p + "downsample.", f);
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      VmBlockWeights::for_each(self.blocks[b], p + "block" + std::to_string(b) + ".", f);
    }
  }
};

struct BackboneWeights {
  PatchEmbedWeights stem;
  std::vector<StageWeights> stages;

  explicit BackboneWeights(const BackboneConfig& cfg)
      : stem(cfg.in_channels, cfg.stage_channels[0], cfg.patch_size) {
    cfg.validate();
    stages.resize(kNumStages);
    for (std::size_t s = 0; s < kNumStages; ++s) {
      if (s > 0) stages[s].downsample.emplace(cfg.stage_channels[s - 1]);
      for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
        stages[s].blocks.emplace_back(cfg.stage_channels[s], cfg.expansion, cfg.ffn_ratio, cfg.state_dim);
      }
    }
  }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    PatchEmbedWeights::for_each(self.stem, p + "stem.", f);
    for (std::size_t s = 0; s < self.stages.size(); ++s) {
      StageWeights::for_each(self.stages[s], p + "stage" + std::to_string(s + 1) + ".", f);
    }
  }
};

/// Four-level feature pyramid, finest first: F_i has shape [C_i, H/2^{i+1}, W/2^{i+1}].
struct PyramidFeatures {
  std::vector<Tensor> levels;

  std::size_t size() const { return levels.size(); }
  const Tensor& operator[](std::size_t i) const { return levels[i]; }
  friend bool operator==(const PyramidFeatures&, const PyramidFeatures&) = default;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Non-overlapping patch embedding followed by channel LayerNorm.
inline Tensor patch_partition(const Tensor& img, const PatchEmbedWeights& w) {
  require_rank(img, 3, "patch_partition input");
  const std::size_t patch = w.proj.options.stride;
  if (img.dim(1) % patch != 0 || img.dim(2) % patch != 0) {
    throw DimensionError("patch_partition: input " + shape_str(img.shape()) + " not divisible by patch size " +
                         std::to_string(patch));
  }
  const Tensor embedded = w.proj.apply(img);
  const std::size_t oh = embedded.dim(1), ow = embedded.dim(2);
  return tokens_to_grid(w.norm.apply(grid_to_tokens(embedded)), oh, ow);
}

/// Visual Mamba block on an [H*W, C] token sequence in row-major grid order.
inline Tensor vm_block(const Tensor& z, const VmBlockWeights& w, std::size_t height, std::size_t width) {
  require_rank(z, 2, "vm_block input");
  if (z.dim(0) != height * width) {
    throw DimensionError("vm_block: " + std::to_string(z.dim(0)) + " tokens do not match grid " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  // SS2D branch.
  Tensor grid = tokens_to_grid(w.in_proj.apply(w.ln1.apply(z)), height, width);
  grid = w.dw_conv.apply(grid);
  activation_inplace(grid, Activation::silu);
  const Tensor scanned = grid_to_tokens(ss2d(grid, w.ss2d));
  const Tensor z_prime = add(w.out_proj.apply(w.ln2.apply(scanned)), z);

  // Feed-forward branch.
  Tensor hidden = w.ffn_in.apply(w.ln3.apply(z_prime));
  activation_inplace(hidden, Activation::silu);
  return add(w.ffn_out.apply(hidden), z_prime);
}

/// Space-to-channel gather of 2x2 neighbourhoods: [C,H,W] -> [4C,H/2,W/2].
/// Channel blocks hold offsets (0,0), (1,0), (0,1), (1,1) as (dh, dw).
inline Tensor patch_merge_gather(const Tensor& x) {
  require_rank(x, 3, "patch_merge input");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (height % 2 != 0 || width % 2 != 0) {
    throw DimensionError("patch_merge: extents of " + shape_str(x.shape()) + " must be even");
  }
  constexpr std::array<std::pair<std::size_t, std::size_t>, 4> offsets{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};
  const std::size_t oh = height / 2, ow = width / 2;
  Tensor out({4 * channels, oh, ow});
  for (std::size_t q = 0; q < 4; ++q) {
    const auto [dh, dw] = offsets[q];
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) out(q * channels + c, i, j) = x(c, 2 * i + dh, 2 * j + dw);
      }
    }
  }
  return out;
}

inline Tensor patch_merge(const Tensor& x, const PatchMergeWeights& w) {
  const Tensor gathered = patch_merge_gather(x);
  const std::size_t oh = gathered.dim(1), ow = gathered.dim(2);
  return tokens_to_grid(w.reduction.apply(w.norm.apply(grid_to_tokens(gathered))), oh, ow);
}

/// Runs one stream of the hierarchical encoder.
inline PyramidFeatures encode(const Tensor& img, const BackboneConfig& cfg, const BackboneWeights& w) {
  require_rank(img, 3, "encode input");
  if (img.dim(0) != cfg.in_channels) {
    throw DimensionError("encode: input " + shape_str(img.shape()) + " has wrong channel count, expected " +
                         std::to_string(cfg.in_channels));
  }
  const std::size_t stride = cfg.total_stride();
  if (img.dim(1) % stride != 0 || img.dim(2) % stride != 0) {
    throw DimensionError("encode: input extents of " + shape_str(img.shape()) + " must be divisible by " +
                         std::to_string(stride));
  }
  PyramidFeatures pyramid;
  Tensor grid = patch_partition(img, w.stem);
  for (std::size_t s = 0; s < w.stages.size(); ++s) {
    const StageWeights& stage = w.stages[s];
    if (stage.downsample) grid = patch_merge(grid, *stage.downsample);
    const std::size_t height = grid.dim(1), width = grid.dim(2);
    Tensor tokens = grid_to_tokens(grid);
    for (const auto& block : stage.blocks) tokens = vm_block(tokens, block, height, width);
    grid = tokens_to_grid(tokens, height, width);
    pyramid.levels.push_back(grid);
  }
  return pyramid;
}

inline std::pair<PyramidFeatures, PyramidFeatures> dual_encode(const Tensor& rgb, const Tensor& depth,
                                                               const BackboneConfig& cfg_rgb,
                                                               const BackboneConfig& cfg_depth,
                                                               const BackboneWeights& w_rgb,
                                                               const BackboneWeights& w_depth) {
  require_rank(rgb, 3, "dual_encode rgb");
  require_rank(depth, 3, "dual_encode depth");
  if (rgb.dim(1) != depth.dim(1) || rgb.dim(2) != depth.dim(2)) {
    throw DimensionError("dual_encode: spatial mismatch between rgb " + shape_str(rgb.shape()) + " and depth " +
                         shape_str(depth.shape()));
  }
  return {encode(rgb, cfg_rgb, w_rgb), encode(depth, cfg_depth, w_depth)};
}

}  // namespace mambasod
