#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mambasod/ops.hpp"
#include "mambasod/params.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

// ---------------------------------------------------------------------------
// Linear time-invariant SSM with diagonal state matrix
// ---------------------------------------------------------------------------

/// Continuous system h'(t) = A h(t) + B x(t), y(t) = C h(t); A is stored as its diagonal.
struct LtiSsm {
  Tensor a;  // [N]
  Tensor b;  // [N]
  Tensor c;  // [N]
  Real delta = Real(1);

  std::size_t state_dim() const { return a.size(); }
};

struct DiscreteLtiSsm {
  Tensor a_bar;  // [N]
  Tensor b_bar;  // [N]
  Tensor c;      // [N]

  std::size_t state_dim() const { return a_bar.size(); }
};

/// Below this |delta*A| the (e^x - 1)/x factor is evaluated by its Taylor series.
inline constexpr Real kExprelSeriesThreshold = Real(1e-4);

/// (e^x - 1) / x with the removable singularity at 0 filled in.
inline Real exprel(Real x) {
  if (std::abs(x) < kExprelSeriesThreshold) {
    return Real(1) + x * (Real(1) / 2 + x * (Real(1) / 6 + x * (Real(1) / 24)));
  }
  return std::expm1(x) / x;
}

struct ZohCoefficients {
  Real a_bar;
  Real b_bar;
};

/// Zero-order hold for one diagonal entry: a_bar = e^{delta a}, b_bar = (e^{delta a} - 1)/a * b.
inline ZohCoefficients zoh_scalar(Real a, Real b, Real delta) {
  const Real x = delta * a;
  if (std::abs(x) < kExprelSeriesThreshold) return {std::exp(x), delta * exprel(x) * b};
  const Real em1 = std::expm1(x);
  return {Real(1) + em1, delta * (em1 / x) * b};
}

inline void require_positive_delta(Real delta) {
  if (!(delta > 0)) {
    throw std::invalid_argument("zoh_discretize: delta must be > 0, got " + std::to_string(delta));
  }
}

/// Elementwise ZOH over matching A and B tensors (any shape, e.g. [N] or [D,N]).
inline std::pair<Tensor, Tensor> zoh_discretize(const Tensor& a, const Tensor& b, Real delta) {
  require_positive_delta(delta);
  require_same_shape(a, b, "zoh_discretize");
  Tensor a_bar(a.shape()), b_bar(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto z = zoh_scalar(a[i], b[i], delta);
    a_bar[i] = z.a_bar;
    b_bar[i] = z.b_bar;
  }
  return {std::move(a_bar), std::move(b_bar)};
}

inline DiscreteLtiSsm discretize(const LtiSsm& m) {
  require_same_shape(m.a, m.c, "discretize");
  auto [a_bar, b_bar] = zoh_discretize(m.a, m.b, m.delta);
  return {std::move(a_bar), std::move(b_bar), m.c};
}

inline void require_discrete_consistent(const DiscreteLtiSsm& m, const char* what) {
  if (m.a_bar.size() != m.b_bar.size() || m.a_bar.size() != m.c.size() || m.a_bar.empty()) {
    throw DimensionError(std::string(what) + ": inconsistent state dims " + shape_str(m.a_bar.shape()) + "/" +
                         shape_str(m.b_bar.shape()) + "/" + shape_str(m.c.shape()));
  }
}

/// h_t = A_bar h_{t-1} + B_bar x_t, y_t = C h_t from h_0 = 0.
inline Tensor ssm_scan_recurrent(const DiscreteLtiSsm& m, const Tensor& x) {
  require_discrete_consistent(m, "ssm_scan_recurrent");
  const std::size_t n = m.state_dim(), len = x.size();
  std::vector<Real> h(n, Real(0));
  Tensor y({len});
  for (std::size_t t = 0; t < len; ++t) {
    Real acc = 0;
    for (std::size_t k = 0; k < n; ++k) {
      h[k] = m.a_bar[k] * h[k] + m.b_bar[k] * x[t];
      acc += m.c[k] * h[k];
    }
    y[t] = acc;
  }
  return y;
}

/// K = (C B_bar, C A_bar B_bar, ..., C A_bar^{L-1} B_bar).
inline Tensor ssm_kernel(const DiscreteLtiSsm& m, std::size_t length) {
  require_discrete_consistent(m, "ssm_kernel");
  if (length == 0) throw DimensionError("ssm_kernel: length must be >= 1");
  const std::size_t n = m.state_dim();
  std::vector<Real> power(m.b_bar.data().begin(), m.b_bar.data().end());  // A_bar^t B_bar
  Tensor kernel({length});
  for (std::size_t t = 0; t < length; ++t) {
    Real acc = 0;
    for (std::size_t k = 0; k < n; ++k) acc += m.c[k] * power[k];
    kernel[t] = acc;
    for (std::size_t k = 0; k < n; ++k) power[k] *= m.a_bar[k];
  }
  return kernel;
}

/// Causal convolution y_t = sum_{tau <= t} K[tau] x_{t - tau}.
inline Tensor causal_convolve(const Tensor& kernel, const Tensor& x) {
  if (kernel.size() < x.size()) {
    throw DimensionError("causal_convolve: kernel length " + std::to_string(kernel.size()) +
                         " shorter than input length " + std::to_string(x.size()));
  }
  Tensor y({x.size()});
  for (std::size_t t = 0; t < x.size(); ++t) {
    Real acc = 0;
    for (std::size_t tau = 0; tau <= t; ++tau) acc += kernel[tau] * x[t - tau];
    y[t] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Selective (input-dependent) scan
// ---------------------------------------------------------------------------

/// Replaces the token-dependent projections by fixed per-channel delta and shared B, C.
struct ConstantProjections {
  Tensor delta;  // [D], each > 0
  Tensor b;      // [N]
  Tensor c;      // [N]
};

/**
 * Parameters of one selective scan over D channels with an N-dimensional
 * diagonal state per channel.
 *
 * Per token x[l] in R^D:
 *   delta[l,d] = softplus(delta_up[d] . (delta_down x[l]) + delta_bias[d])
 *   B[l]       = b_proj x[l],  C[l] = c_proj x[l]
 * and A[d,n] = -exp(a_log[d,n]) is strictly negative.
 */
struct SelectiveSsmParams {
  Tensor a_log;       // [D,N]
  Tensor delta_down;  // [R,D]
  Tensor delta_up;    // [D,R]
  Tensor delta_bias;  // [D]
  Tensor b_proj;      // [N,D]
  Tensor c_proj;      // [N,D]
  Tensor d_skip;      // [D]
  std::optional<ConstantProjections> frozen;

  std::size_t channels() const { return a_log.dim(0); }
  std::size_t state_dim() const { return a_log.dim(1); }
  std::size_t delta_rank() const { return delta_down.dim(0); }

  /// Zero-filled parameters with consistent shapes.
  static SelectiveSsmParams zeros(std::size_t channels, std::size_t state_dim, std::size_t rank) {
    SelectiveSsmParams p;
    p.a_log = Tensor({channels, state_dim});
    p.delta_down = Tensor({rank, channels});
    p.delta_up = Tensor({channels, rank});
    p.delta_bias = Tensor({channels});
    p.b_proj = Tensor({state_dim, channels});
    p.c_proj = Tensor({state_dim, channels});
    p.d_skip = Tensor({channels});
    return p;
  }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "a_log", self.a_log, ParamKind::a_log);
    f(prefix + "delta_down", self.delta_down, ParamKind::weight);
    f(prefix + "delta_up", self.delta_up, ParamKind::weight);
    f(prefix + "delta_bias", self.delta_bias, ParamKind::bias);
    f(prefix + "b_proj", self.b_proj, ParamKind::weight);
    f(prefix + "c_proj", self.c_proj, ParamKind::weight);
    f(prefix + "d_skip", self.d_skip, ParamKind::d_skip);
  }
};

/// Default rank of the delta projection: ceil(D / 16).
inline std::size_t default_delta_rank(std::size_t channels) { return (channels + 15) / 16; }

inline Tensor negative_exp(const Tensor& a_log) {
  Tensor a(a_log.shape());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
  return a;
}

inline Tensor selective_scan(const SelectiveSsmParams& p, const Tensor& x) {
  require_rank(x, 2, "selective_scan input");
  const std::size_t len = x.dim(0), d_model = p.channels(), n = p.state_dim();
  if (x.dim(1) != d_model) {
    throw DimensionError("selective_scan: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(d_model) + " channels");
  }
  const Tensor a = negative_exp(p.a_log);

  Tensor delta, b_tok, c_tok;
  if (p.frozen) {
    const auto& fz = *p.frozen;
    if (fz.delta.size() != d_model || fz.b.size() != n || fz.c.size() != n) {
      throw DimensionError("selective_scan: frozen projections do not match D/N");
    }
    delta = Tensor({len, d_model});
    b_tok = Tensor({len, n});
    c_tok = Tensor({len, n});
    for (std::size_t l = 0; l < len; ++l) {
      std::copy_n(fz.delta.raw(), d_model, delta.row(l));
      std::copy_n(fz.b.raw(), n, b_tok.row(l));
      std::copy_n(fz.c.raw(), n, c_tok.row(l));
    }
  } else {
    delta = linear(linear(x, p.delta_down), p.delta_up, p.delta_bias);
    activation_inplace(delta, Activation::softplus);
    b_tok = linear(x, p.b_proj);
    c_tok = linear(x, p.c_proj);
  }

  std::vector<Real> h(d_model * n, Real(0));
  Tensor y({len, d_model});
  for (std::size_t l = 0; l < len; ++l) {
    const Real* xr = x.row(l);
    const Real* dr = delta.row(l);
    const Real* br = b_tok.row(l);
    const Real* cr = c_tok.row(l);
    Real* yr = y.row(l);
    for (std::size_t d = 0; d < d_model; ++d) {
      Real* hd = h.data() + d * n;
      const Real* ad = a.raw() + d * n;
      const Real dt = dr[d], xv = xr[d];
      Real acc = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const auto z = zoh_scalar(ad[k], br[k], dt);
        hd[k] = z.a_bar * hd[k] + z.b_bar * xv;
        acc += cr[k] * hd[k];
      }
      yr[d] = acc + p.d_skip[d] * xv;
    }
  }
  return y;
}

}  // namespace mambasod
