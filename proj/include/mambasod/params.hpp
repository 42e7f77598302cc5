#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "mambasod/ops.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

/// Role of a learnable array; decides how it is initialized.
enum class ParamKind { weight, bias, norm_gamma, norm_beta, a_log, d_skip };

inline constexpr Real kInitStd = Real(0.02);

// Every weight struct exposes
//   template <class Self, class F> static void for_each(Self&, const std::string& prefix, F&&)
// calling f(name, tensor, kind) for each learnable array in a fixed order. Self may be const.

template <class W, class F>
void visit_params(W& weights, const std::string& prefix, F&& f) {
  std::remove_const_t<W>::for_each(weights, prefix, f);
}

template <class W>
std::size_t count_params(const W& weights) {
  std::size_t total = 0;
  visit_params(weights, "", [&](const std::string&, const Tensor& t, ParamKind) { total += t.size(); });
  return total;
}

inline void init_param(Tensor& t, ParamKind kind, std::mt19937_64& rng) {
  switch (kind) {
    case ParamKind::weight: {
      std::normal_distribution<Real> normal(Real(0), kInitStd);
      for (Real& v : t.data()) v = normal(rng);
      break;
    }
    case ParamKind::bias:
    case ParamKind::norm_beta: t.fill(Real(0)); break;
    case ParamKind::norm_gamma:
    case ParamKind::d_skip: t.fill(Real(1)); break;
    case ParamKind::a_log: {
      const std::size_t n = t.shape().back();
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::log(static_cast<Real>(i % n + 1));
      break;
    }
  }
}

/// Seeded initialization of every parameter in visit order.
template <class W>
void init_params(W& weights, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  visit_params(weights, "", [&](const std::string&, Tensor& t, ParamKind kind) { init_param(t, kind, rng); });
}

// ---------------------------------------------------------------------------
// Shared building blocks
// ---------------------------------------------------------------------------

struct LayerNormWeights {
  Tensor gamma;
  Tensor beta;

  explicit LayerNormWeights(std::size_t channels = 1)
      : gamma(Tensor::full({channels}, Real(1))), beta(Tensor({channels})) {}

  Tensor apply(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "gamma", self.gamma, ParamKind::norm_gamma);
    f(prefix + "beta", self.beta, ParamKind::norm_beta);
  }
};

/// Token-wise affine map [L,in] -> [L,out].
struct LinearWeights {
  Tensor weight;  // [out,in]
  std::optional<Tensor> bias;

  LinearWeights() = default;
  LinearWeights(std::size_t in, std::size_t out, bool with_bias = true) : weight({out, in}) {
    if (with_bias) bias = Tensor({out});
  }

  Tensor apply(const Tensor& x) const { return linear(x, weight, bias ? &*bias : nullptr); }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "weight", self.weight, ParamKind::weight);
    if (self.bias) f(prefix + "bias", *self.bias, ParamKind::bias);
  }
};

struct ConvWeights {
  Tensor kernel;  // [out, in/groups, kh, kw]
  std::optional<Tensor> bias;
  Conv2dOptions options;

  ConvWeights() = default;
  ConvWeights(std::size_t in, std::size_t out, std::size_t k, Conv2dOptions opt, bool with_bias = true)
      : kernel({out, in / opt.groups, k, k}), options(opt) {
    if (with_bias) bias = Tensor({out});
  }

  static ConvWeights pointwise(std::size_t in, std::size_t out) { return {in, out, 1, {}}; }
  static ConvWeights same3x3(std::size_t in, std::size_t out) { return {in, out, 3, {1, 1, 1}}; }
  static ConvWeights depthwise3x3(std::size_t channels) { return {channels, channels, 3, {1, 1, channels}}; }

  Tensor apply(const Tensor& x) const { return conv2d(x, kernel, bias ? &*bias : nullptr, options); }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "kernel", self.kernel, ParamKind::weight);
    if (self.bias) f(prefix + "bias", *self.bias, ParamKind::bias);
  }
};

}  // namespace mambasod
