#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mambasod/tensor.hpp"

namespace mambasod {

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Pairwise (cascade) summation. The top-level split is always at n/2, so
/// swapping two equal-length halves of the input yields a bit-identical sum.
inline Real pairwise_sum(std::span<const Real> v) {
  if (v.size() <= 8) {
    Real s = 0;
    for (Real x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// ---------------------------------------------------------------------------
// Linear map
// ---------------------------------------------------------------------------

namespace detail {

// y[o] = sum_i w[o,i] * x[i] accumulated strictly left to right, four output
// rows at a time for instruction-level parallelism. Each output keeps the
// same summation order as a naive loop.
inline void matvec_rows(const Real* w, std::size_t cout, std::size_t cin, const Real* x, Real* y) {
  std::size_t o = 0;
  for (; o + 4 <= cout; o += 4) {
    const Real* w0 = w + (o + 0) * cin;
    const Real* w1 = w + (o + 1) * cin;
    const Real* w2 = w + (o + 2) * cin;
    const Real* w3 = w + (o + 3) * cin;
    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    for (std::size_t i = 0; i < cin; ++i) {
      const Real xi = x[i];
      s0 += w0[i] * xi;
      s1 += w1[i] * xi;
      s2 += w2[i] * xi;
      s3 += w3[i] * xi;
    }
    y[o + 0] = s0;
    y[o + 1] = s1;
    y[o + 2] = s2;
    y[o + 3] = s3;
  }
  for (; o < cout; ++o) {
    const Real* wr = w + o * cin;
    Real s = 0;
    for (std::size_t i = 0; i < cin; ++i) s += wr[i] * x[i];
    y[o] = s;
  }
}

}  // namespace detail

/// y[l,o] = sum_i W[o,i] * x[l,i] + b[o]; bias may be omitted.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t tokens = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
  if (weight.dim(1) != cin) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw DimensionError("linear: bias " + shape_str(bias->shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  Tensor y({tokens, cout});
  for (std::size_t l = 0; l < tokens; ++l) {
    Real* yr = y.row(l);
    detail::matvec_rows(weight.raw(), cout, cin, x.row(l), yr);
    if (bias) {
      for (std::size_t o = 0; o < cout; ++o) yr[o] += (*bias)[o];
    }
  }
  return y;
}

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return linear(x, weight, &bias);
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Grouped 2D cross-correlation over a [Cin,H,W] map with [Cout,Cin/groups,kh,kw] kernels.
inline Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor* bias,
                     Conv2dOptions opt = {}) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t cin = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t cout = kernels.dim(0), cpg = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (opt.groups == 0 || opt.stride == 0) throw DimensionError("conv2d: groups and stride must be >= 1");
  if (cin % opt.groups != 0 || cout % opt.groups != 0) {
    throw DimensionError("conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                         " not divisible by groups " + std::to_string(opt.groups));
  }
  if (cpg != cin / opt.groups) {
    throw DimensionError("conv2d: kernels " + shape_str(kernels.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " at groups " + std::to_string(opt.groups));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
  }
  const auto span_h = static_cast<long>(height + 2 * opt.padding) - static_cast<long>(kh);
  const auto span_w = static_cast<long>(width + 2 * opt.padding) - static_cast<long>(kw);
  if (span_h < 0 || span_w < 0) {
    throw DimensionError("conv2d: output extent < 1 for input " + shape_str(x.shape()) + " and kernels " +
                         shape_str(kernels.shape()));
  }
  const std::size_t oh = static_cast<std::size_t>(span_h) / opt.stride + 1;
  const std::size_t ow = static_cast<std::size_t>(span_w) / opt.stride + 1;
  const long stride = static_cast<long>(opt.stride), pad = static_cast<long>(opt.padding);
  const std::size_t cout_per_group = cout / opt.groups;

  // Valid output range [lo, hi) along one axis for kernel tap k.
  auto valid_range = [&](long k, std::size_t in_extent, std::size_t out_extent) {
    long lo = 0;
    if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
    long hi_incl = (static_cast<long>(in_extent) - 1 + pad - k);
    long hi = hi_incl < 0 ? 0 : hi_incl / stride + 1;
    hi = std::min<long>(hi, static_cast<long>(out_extent));
    return std::pair<long, long>(lo, std::max(lo, hi));
  };

  Tensor y({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co) {
    const std::size_t group = co / cout_per_group;
    Real* out = y.raw() + co * oh * ow;
    for (std::size_t cg = 0; cg < cpg; ++cg) {
      const std::size_t ci = group * cpg + cg;
      const Real* in = x.raw() + ci * height * width;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [oy0, oy1] = valid_range(static_cast<long>(ky), height, oh);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Real wv = kernels.raw()[((co * cpg + cg) * kh + ky) * kw + kx];
          const auto [ox0, ox1] = valid_range(static_cast<long>(kx), width, ow);
          for (long oy = oy0; oy < oy1; ++oy) {
            const Real* in_row = in + (oy * stride - pad + static_cast<long>(ky)) * static_cast<long>(width);
            Real* out_row = out + oy * static_cast<long>(ow);
            for (long ox = ox0; ox < ox1; ++ox) {
              out_row[ox] += wv * in_row[ox * stride - pad + static_cast<long>(kx)];
            }
          }
        }
      }
    }
    if (bias) {
      const Real b = (*bias)[co];
      for (std::size_t i = 0; i < oh * ow; ++i) out[i] += b;
    }
  }
  return y;
}

inline Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Conv2dOptions opt = {}) {
  return conv2d(x, kernels, &bias, opt);
}

// ---------------------------------------------------------------------------
// Normalization and activations
// ---------------------------------------------------------------------------

inline constexpr Real kLayerNormEps = Real(1e-5);

/// Per-token normalization over the channel axis of an [L,C] sequence.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = kLayerNormEps) {
  require_rank(x, 2, "layer_norm input");
  const std::size_t tokens = x.dim(0), channels = x.dim(1);
  if (gamma.size() != channels || beta.size() != channels) {
    throw DimensionError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match input " + shape_str(x.shape()));
  }
  Tensor y(x.shape());
  std::vector<Real> dev(channels);
  const Real inv_c = Real(1) / static_cast<Real>(channels);
  for (std::size_t l = 0; l < tokens; ++l) {
    const Real* xr = x.row(l);
    const Real mean = pairwise_sum({xr, channels}) * inv_c;
    for (std::size_t c = 0; c < channels; ++c) {
      const Real d = xr[c] - mean;
      dev[c] = d * d;
    }
    const Real var = pairwise_sum(dev) * inv_c;
    const Real inv_std = Real(1) / std::sqrt(var + eps);
    Real* yr = y.row(l);
    for (std::size_t c = 0; c < channels; ++c) yr[c] = (xr[c] - mean) * inv_std * gamma[c] + beta[c];
  }
  return y;
}

enum class Activation { silu, sigmoid, softplus, relu };

inline Real sigmoid(Real v) {
  if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}

inline Real silu(Real v) { return v * sigmoid(v); }

inline Real softplus(Real v) {
  if (v > Real(30)) return v;
  return std::log1p(std::exp(v));
}

inline Real relu(Real v) { return v > 0 ? v : Real(0); }

inline Real activate(Real v, Activation kind) {
  switch (kind) {
    case Activation::silu: return silu(v);
    case Activation::sigmoid: return sigmoid(v);
    case Activation::softplus: return softplus(v);
    case Activation::relu: return relu(v);
  }
  return v;
}

inline Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], kind);
  return y;
}

inline void activation_inplace(Tensor& x, Activation kind) {
  for (Real& v : x.data()) v = activate(v, kind);
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace detail {

struct InterpTap {
  std::size_t i0, i1;
  Real frac;
};

// Half-pixel (align_corners=false) source coordinates along one axis.
inline std::vector<InterpTap> bilinear_taps(std::size_t in_extent, std::size_t out_extent) {
  std::vector<InterpTap> taps(out_extent);
  const Real ratio = static_cast<Real>(in_extent) / static_cast<Real>(out_extent);
  for (std::size_t o = 0; o < out_extent; ++o) {
    Real src = (static_cast<Real>(o) + Real(0.5)) * ratio - Real(0.5);
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in_extent - 1) i0 = in_extent - 1;
    const std::size_t i1 = std::min(i0 + 1, in_extent - 1);
    taps[o] = {i0, i1, src - static_cast<Real>(i0)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of a [C,H,W] map. Interpolates as a + t*(b - a), so
/// constant planes are reproduced exactly.
inline Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "resize_bilinear input");
  const std::size_t channels = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
  const auto ty = detail::bilinear_taps(in_h, out_h);
  const auto tx = detail::bilinear_taps(in_w, out_w);
  Tensor y({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& vy = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& vx = tx[ox];
        const Real a = x(c, vy.i0, vx.i0), b = x(c, vy.i0, vx.i1);
        const Real p = x(c, vy.i1, vx.i0), q = x(c, vy.i1, vx.i1);
        const Real top = a + vx.frac * (b - a);
        const Real bottom = p + vx.frac * (q - p);
        y(c, oy, ox) = top + vy.frac * (bottom - top);
      }
    }
  }
  return y;
}

inline Tensor upsample_bilinear_x2(const Tensor& x) {
  require_rank(x, 3, "upsample_bilinear_x2 input");
  return resize_bilinear(x, 2 * x.dim(1), 2 * x.dim(2));
}

// ---------------------------------------------------------------------------
// Concatenation and layout
// ---------------------------------------------------------------------------

/// Concatenates two [C,H,W] maps along the channel axis.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels lhs");
  require_rank(b, 3, "concat_channels rhs");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data().begin(), a.data().end(), y.data().begin());
  std::copy(b.data().begin(), b.data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t first) {
  require_rank(x, 3, "split_channels input");
  if (first == 0 || first >= x.dim(0)) {
    throw DimensionError("split_channels: split point " + std::to_string(first) + " invalid for " +
                         shape_str(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor a({first, x.dim(1), x.dim(2)});
  Tensor b({x.dim(0) - first, x.dim(1), x.dim(2)});
  std::copy_n(x.raw(), first * plane, a.raw());
  std::copy_n(x.raw() + first * plane, b.size(), b.raw());
  return {std::move(a), std::move(b)};
}

/// Concatenates two [L,C] token sequences along the feature axis.
inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_features lhs");
  require_rank(b, 2, "concat_features rhs");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_features: token count mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t ca = a.dim(1), cb = b.dim(1);
  Tensor y({a.dim(0), ca + cb});
  for (std::size_t l = 0; l < a.dim(0); ++l) {
    std::copy_n(a.row(l), ca, y.row(l));
    std::copy_n(b.row(l), cb, y.row(l) + ca);
  }
  return y;
}

/// [L,C] tokens in row-major grid order (l = h*W + w) to a [C,H,W] map.
inline Tensor tokens_to_grid(const Tensor& tokens, std::size_t height, std::size_t width) {
  require_rank(tokens, 2, "tokens_to_grid input");
  if (tokens.dim(0) != height * width) {
    throw DimensionError("tokens_to_grid: " + std::to_string(tokens.dim(0)) + " tokens cannot fill a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  const std::size_t channels = tokens.dim(1), plane = height * width;
  Tensor grid({channels, height, width});
  for (std::size_t l = 0; l < plane; ++l) {
    const Real* tr = tokens.row(l);
    for (std::size_t c = 0; c < channels; ++c) grid.raw()[c * plane + l] = tr[c];
  }
  return grid;
}

inline Tensor grid_to_tokens(const Tensor& grid) {
  require_rank(grid, 3, "grid_to_tokens input");
  const std::size_t channels = grid.dim(0), plane = grid.dim(1) * grid.dim(2);
  Tensor tokens({plane, channels});
  for (std::size_t c = 0; c < channels; ++c) {
    const Real* gp = grid.raw() + c * plane;
    for (std::size_t l = 0; l < plane; ++l) tokens.raw()[l * channels + c] = gp[l];
  }
  return tokens;
}

}  // namespace mambasod
