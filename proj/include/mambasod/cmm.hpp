#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include "mambasod/ops.hpp"
#include "mambasod/params.hpp"
#include "mambasod/ssm.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

enum class GateActivation { silu, none };

/// Depthwise causal convolution along the token axis of an [L,C] sequence.
struct CausalConv1dWeights {
  Tensor kernel;  // [C,K]; tap K-1 multiplies the current token
  Tensor bias;    // [C]

  explicit CausalConv1dWeights(std::size_t channels = 1, std::size_t taps = 3)
      : kernel({channels, taps}), bias({channels}) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    f(p + "kernel", self.kernel, ParamKind::weight);
    f(p + "bias", self.bias, ParamKind::bias);
  }
};

inline Tensor causal_conv1d(const Tensor& x, const CausalConv1dWeights& w) {
  require_rank(x, 2, "causal_conv1d input");
  const std::size_t len = x.dim(0), channels = x.dim(1), taps = w.kernel.dim(1);
  if (w.kernel.dim(0) != channels || w.bias.size() != channels) {
    throw DimensionError("causal_conv1d: kernel " + shape_str(w.kernel.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  Tensor y({len, channels});
  for (std::size_t l = 0; l < len; ++l) {
    Real* yr = y.row(l);
    for (std::size_t c = 0; c < channels; ++c) {
      Real acc = 0;
      for (std::size_t k = 0; k < taps; ++k) {
        const std::size_t back = taps - 1 - k;
        if (back > l) continue;
        acc += w.kernel(c, k) * x(l - back, c);
      }
      yr[c] = acc + w.bias[c];
    }
  }
  return y;
}

/// LN -> MLP -> causal Conv1d + SiLU -> selective scan.
struct CmmBranchWeights {
  LayerNormWeights norm;
  LinearWeights mlp;
  CausalConv1dWeights conv1;
  SelectiveSsmParams ssm;

  CmmBranchWeights(std::size_t in_width, std::size_t channels, std::size_t state_dim)
      : norm(in_width),
        mlp(in_width, channels),
        conv1(channels),
        ssm(SelectiveSsmParams::zeros(channels, state_dim, default_delta_rank(channels))) {}

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    LayerNormWeights::for_each(self.norm, p + "norm.", f);
    LinearWeights::for_each(self.mlp, p + "mlp.", f);
    CausalConv1dWeights::for_each(self.conv1, p + "conv1.", f);
    SelectiveSsmParams::for_each(self.ssm, p + "ssm.", f);
  }
};

struct CmmWeights {
  CmmBranchWeights rgb;
  CmmBranchWeights depth;
  CmmBranchWeights inter;  // input width 2C, output C
  LinearWeights out_mlp;
  ConvWeights dw_conv;

  CmmWeights(std::size_t channels, std::size_t state_dim)
      : rgb(channels, channels, state_dim),
        depth(channels, channels, state_dim),
        inter(2 * channels, channels, state_dim),
        out_mlp(channels, channels),
        dw_conv(ConvWeights::depthwise3x3(channels)) {}

  std::size_t channels() const { return out_mlp.weight.dim(0); }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    CmmBranchWeights::for_each(self.rgb, p + "rgb.", f);
    CmmBranchWeights::for_each(self.depth, p + "depth.", f);
    CmmBranchWeights::for_each(self.inter, p + "inter.", f);
    LinearWeights::for_each(self.out_mlp, p + "out_mlp.", f);
    ConvWeights::for_each(self.dw_conv, p + "dw_conv.", f);
  }
};

/// Weights of the same module with the two modalities exchanged: the rgb and
/// depth branches trade places and the inter branch's concatenation halves are
/// permuted to match, so cmm_fuse(d, r, swapped) == cmm_fuse(r, d, w).
inline CmmWeights swapped_modalities(const CmmWeights& w) {
  CmmWeights s = w;
  std::swap(s.rgb, s.depth);
  const std::size_t c = w.channels();
  auto swap_halves = [c](Real* row) { std::swap_ranges(row, row + c, row + c); };
  swap_halves(s.inter.norm.gamma.raw());
  swap_halves(s.inter.norm.beta.raw());
  for (std::size_t o = 0; o < s.inter.mlp.weight.dim(0); ++o) swap_halves(s.inter.mlp.weight.row(o));
  return s;
}

namespace detail {

// Linear map whose inner sum is accumulated as (sum over [0,split)) + (sum over
// [split,in)). Exchanging the two input halves together with the matching
// weight column blocks leaves the result bit-identical.
inline Tensor linear_two_block(const Tensor& x, const LinearWeights& w, std::size_t split) {
  const std::size_t tokens = x.dim(0), cin = x.dim(1), cout = w.weight.dim(0);
  if (w.weight.dim(1) != cin || split > cin) {
    throw DimensionError("linear_two_block: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.weight.shape()));
  }
  Tensor y({tokens, cout});
  for (std::size_t l = 0; l < tokens; ++l) {
    const Real* xr = x.row(l);
    for (std::size_t o = 0; o < cout; ++o) {
      const Real* wr = w.weight.row(o);
      Real lo = 0, hi = 0;
      for (std::size_t i = 0; i < split; ++i) lo += wr[i] * xr[i];
      for (std::size_t i = split; i < cin; ++i) hi += wr[i] * xr[i];
      y(l, o) = (lo + hi) + (w.bias ? (*w.bias)[o] : Real(0));
    }
  }
  return y;
}

inline Tensor branch_tail(Tensor projected, const CmmBranchWeights& w) {
  Tensor conv = causal_conv1d(projected, w.conv1);
  activation_inplace(conv, Activation::silu);
  return selective_scan(w.ssm, conv);
}

}  // namespace detail

/// Mamba-style enhancement of one modality's [N,C] tokens.
inline Tensor self_enhance(const Tensor& features, const CmmBranchWeights& w) {
  require_rank(features, 2, "self_enhance input");
  return detail::branch_tail(w.mlp.apply(w.norm.apply(features)), w);
}

/// Inter-modal correlation gate computed from the concatenated modalities.
inline Tensor inter_modal_gate(const Tensor& f_rgb, const Tensor& f_depth, const CmmBranchWeights& w,
                               GateActivation act = GateActivation::silu) {
  require_same_shape(f_rgb, f_depth, "inter_modal_gate");
  const Tensor joint = w.norm.apply(concat_features(f_rgb, f_depth));
  Tensor g = detail::branch_tail(detail::linear_two_block(joint, w.mlp, f_rgb.dim(1)), w);
  if (act == GateActivation::silu) activation_inplace(g, Activation::silu);
  return g;
}

/// Cross-modal fusion of two [H*W, C] token sequences into a [C,H,W] map.
inline Tensor cmm_fuse(const Tensor& f_rgb, const Tensor& f_depth, const CmmWeights& w, std::size_t height,
                       std::size_t width, GateActivation act = GateActivation::silu) {
  require_same_shape(f_rgb, f_depth, "cmm_fuse");
  require_rank(f_rgb, 2, "cmm_fuse input");
  if (f_rgb.dim(0) != height * width) {
    throw DimensionError("cmm_fuse: " + std::to_string(f_rgb.dim(0)) + " tokens do not match grid " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const Tensor y_rgb = self_enhance(f_rgb, w.rgb);
  const Tensor y_depth = self_enhance(f_depth, w.depth);
  const Tensor gate = inter_modal_gate(f_rgb, f_depth, w.inter, act);

  Tensor gated(y_rgb.shape());
  for (std::size_t i = 0; i < gated.size(); ++i) gated[i] = y_rgb[i] * gate[i] + y_depth[i] * gate[i];
  const Tensor fused = add(w.out_mlp.apply(gated), add(f_rgb, f_depth));
  return w.dw_conv.apply(tokens_to_grid(fused, height, width));
}

}  // namespace mambasod
