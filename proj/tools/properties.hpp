#pragma once

// Property suite behind `mambasod check`. Each property recomputes an
// invariant from scratch on small seeded inputs. A fault can be injected into
// any one property by name; it nudges the value under test so the
// comparison that follows must fail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mambasod/mambasod.hpp"

namespace mambasod::cli {

inline constexpr std::size_t kDeskParamCount = 1315189;

struct Fault {
  bool active = false;

  void nudge(Tensor& t) const {
    if (active && !t.empty()) t[0] += Real(1e-3);
  }
  void nudge(Real& v) const {
    if (active) v += Real(1e-3);
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Property {
  std::string name;
  std::function<Outcome(const Fault&)> run;
};

namespace props {

inline Tensor uniform(Shape shape, std::mt19937_64& rng, Real lo = -1, Real hi = 1) {
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = lo + (hi - lo) * static_cast<Real>(unit_uniform(rng));
  return t;
}

inline Outcome within(Real observed, Real tol, const char* what = "max abs diff") {
  std::ostringstream os;
  os << what << " " << observed << " (tol " << tol << ")";
  return {observed < tol, os.str()};
}

inline Outcome exact(bool equal, const char* what = "bit-exact") {
  return {equal, equal ? std::string(what) : std::string("not ") + what};
}

inline LtiSsm random_stable(std::mt19937_64& rng, std::size_t n) {
  LtiSsm m{uniform({n}, rng, -3, -0.01), uniform({n}, rng), uniform({n}, rng),
           Real(0.01) + Real(0.49) * static_cast<Real>(unit_uniform(rng))};
  return m;
}

inline void silence(CmmBranchWeights& b) {
  b.ssm.c_proj.fill(0);
  b.ssm.d_skip.fill(0);
}

inline void randomize_biases(CmmWeights& w, std::mt19937_64& rng) {
  visit_params(w, "", [&](const std::string&, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::bias || kind == ParamKind::norm_beta) t = uniform(t.shape(), rng, -0.3, 0.3);
  });
}

inline bool all_equal(const Tensor& t, Real v) {
  for (Real x : t.data())
    if (x != v) return false;
  return true;
}

}  // namespace props

inline std::vector<Property> property_suite() {
  using namespace props;
  std::vector<Property> suite;
  auto reg = [&](std::string name, std::function<Outcome(const Fault&)> f) {
    suite.push_back({std::move(name), std::move(f)});
  };

  reg("ssm.zoh_closed_form", [](const Fault& f) {
    auto [a, b] = zoh_discretize(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), 0.1);
    f.nudge(a);
    return within(std::max(std::abs(a[0] - 0.904837418035959573), std::abs(b[0] - 0.095162581964040427)), 1e-12);
  });

  reg("ssm.zoh_small_step_limit", [](const Fault& f) {
    std::mt19937_64 rng(1);
    const Tensor a = uniform({16}, rng, -5, -0.1), b = uniform({16}, rng);
    auto [a_bar, b_bar] = zoh_discretize(a, b, 1e-9);
    f.nudge(b_bar);
    Real ea = 0, eb = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      ea = std::max(ea, std::abs(a_bar[i] - 1));
      eb = std::max(eb, std::abs(b_bar[i] - Real(1e-9) * b[i]));
    }
    return Outcome{ea < 1e-8 && eb < 1e-15, "A_bar err " + std::to_string(ea) + ", B_bar err " + std::to_string(eb)};
  });

  reg("ssm.zoh_zero_matrix_series_branch", [](const Fault& f) {
    auto [a, b] = zoh_discretize(Tensor({1}, {0.0}), Tensor({1}, {2.0}), 0.3);
    f.nudge(b);
    return exact(a[0] == 1 && std::abs(b[0] - 0.6) < 1e-15, "A_bar = 1 and B_bar = delta*B");
  });

  reg("ssm.exprel_branches_agree", [](const Fault& f) {
    Real worst = 0;
    for (Real x : {-1.0001e-4, -0.9999e-4, 0.9999e-4, 1.0001e-4}) {
      Real v = exprel(x);
      f.nudge(v);
      worst = std::max(worst, std::abs(v - std::expm1(x) / x));
    }
    return within(worst, 1e-12);
  });

  reg("ssm.recurrence_equals_convolution", [](const Fault& f) {
    std::mt19937_64 rng(2);
    Real worst = 0;
    for (int s = 0; s < 20; ++s) {
      for (std::size_t n : {1, 4, 16}) {
        const auto m = discretize(random_stable(rng, n));
        for (std::size_t len : {1, 4, 16, 32}) {
          const Tensor x = uniform({len}, rng);
          Tensor y = ssm_scan_recurrent(m, x);
          f.nudge(y);
          worst = std::max(worst, max_abs_diff(y, causal_convolve(ssm_kernel(m, len), x)));
        }
      }
    }
    return within(worst, 1e-10);
  });

  reg("ssm.scan_linearity", [](const Fault& f) {
    std::mt19937_64 rng(3);
    const auto m = discretize(random_stable(rng, 8));
    const Tensor x1 = uniform({24}, rng), x2 = uniform({24}, rng);
    Tensor lhs = ssm_scan_recurrent(m, add(x1, scale(x2, 1.5)));
    f.nudge(lhs);
    return within(max_abs_diff(lhs, add(ssm_scan_recurrent(m, x1), scale(ssm_scan_recurrent(m, x2), 1.5))), 1e-12);
  });

  reg("ssm.long_sequence_bounded", [](const Fault& f) {
    std::mt19937_64 rng(4);
    const auto m = discretize(random_stable(rng, 16));
    Tensor y = ssm_scan_recurrent(m, uniform({10000}, rng));
    Real max_a = 0, sum_b = 0, max_c = 0, peak = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      max_a = std::max(max_a, m.a_bar[i]);
      sum_b += std::abs(m.b_bar[i]);
      max_c = std::max(max_c, std::abs(m.c[i]));
    }
    if (f.active) y[0] = std::numeric_limits<Real>::infinity();
    for (Real v : y.data()) peak = std::max(peak, std::abs(v));
    const Real bound = 16 * max_c * sum_b / (1 - max_a);
    return Outcome{all_finite(y) && peak <= bound, "peak " + std::to_string(peak) + " bound " + std::to_string(bound)};
  });

  reg("ssm.selective_constant_projection_reduction", [](const Fault& f) {
    std::mt19937_64 rng(5);
    const std::size_t d = 4, n = 3, len = 12;
    auto p = SelectiveSsmParams::zeros(d, n, 1);
    p.a_log = uniform({d, n}, rng);
    p.frozen = ConstantProjections{uniform({d}, rng, 0.05, 0.5), uniform({n}, rng), uniform({n}, rng)};
    const Tensor x = uniform({len, d}, rng);
    Tensor y = selective_scan(p, x);
    f.nudge(y);
    const Tensor a = negative_exp(p.a_log);
    Real worst = 0;
    for (std::size_t c = 0; c < d; ++c) {
      Tensor ac({n}), xc({len});
      for (std::size_t k = 0; k < n; ++k) ac[k] = a(c, k);
      for (std::size_t l = 0; l < len; ++l) xc[l] = x(l, c);
      const Tensor ref = ssm_scan_recurrent(discretize({ac, p.frozen->b, p.frozen->c, p.frozen->delta[c]}), xc);
      for (std::size_t l = 0; l < len; ++l) worst = std::max(worst, std::abs(y(l, c) - ref[l] - p.d_skip[c] * xc[l]));
    }
    return within(worst, 1e-12);
  });

  reg("ssm.selective_zero_fixed_point", [](const Fault& f) {
    auto p = SelectiveSsmParams::zeros(6, 4, 1);
    init_params(p, 6);
    Tensor y = selective_scan(p, Tensor({7, 6}));
    f.nudge(y);
    return exact(all_equal(y, 0), "zero output");
  });

  reg("ss2d.expand_unexpand_bijection", [](const Fault& f) {
    std::mt19937_64 rng(7);
    bool ok = true;
    for (std::size_t h = 1; h <= 16; ++h) {
      for (std::size_t w = 1; w <= 16; ++w) {
        const Tensor x = uniform({2, h, w}, rng);
        for (auto dir : kScanDirections) {
          Tensor back = unexpand(expand(x, dir), dir, h, w);
          if (h == 16 && w == 16) f.nudge(back);
          ok = ok && back == x;
        }
      }
    }
    return exact(ok, "roundtrip on all shapes up to 16x16");
  });

  reg("ss2d.directions_pairwise_distinct", [](const Fault& f) {
    bool ok = true;
    for (std::size_t h = 2; h <= 8; ++h) {
      for (std::size_t w = 2; w <= 8; ++w) {
        std::set<std::vector<std::size_t>> orders;
        for (auto dir : kScanDirections) orders.insert(scan_order(dir, h, w));
        ok = ok && orders.size() == 4;
      }
    }
    if (f.active) ok = false;
    return exact(ok, "four distinct permutations");
  });

  reg("ss2d.flip_equivariance", [](const Fault& f) {
    std::mt19937_64 rng(8);
    const std::size_t C = 2, H = 5, W = 6;
    const Tensor x = uniform({C, H, W}, rng);
    Tensor flipped(x.shape());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) flipped(c, i, j) = x(c, i, W - 1 - j);
    Tensor a = expand(flipped, ScanDirection::RowMajorForward);
    f.nudge(a);
    const Tensor b = expand(x, ScanDirection::RowMajorForward);
    bool ok = true;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t c = 0; c < C; ++c) ok = ok && a(i * W + j, c) == b(i * W + W - 1 - j, c);
    return exact(ok, "row reversal");
  });

  reg("ss2d.frozen_identity_sums_four_branches", [](const Fault& f) {
    std::mt19937_64 rng(9);
    const std::size_t C = 3, N = 4;
    Ss2dParams params = make_ss2d_params(C, N);
    for (auto& p : params) {
      p.a_log = uniform(p.a_log.shape(), rng);
      p.d_skip = Tensor::full({C}, 1);
      p.frozen = ConstantProjections{uniform({C}, rng, 0.1, 1), uniform({N}, rng), Tensor({N})};
    }
    const Tensor x = uniform({C, 6, 5}, rng);
    Tensor y = ss2d(x, params);
    f.nudge(y);
    return within(max_abs_diff(y, scale(x, 4)), 1e-12);
  });

  reg("backbone.shape_ladder", [](const Fault& f) {
    const auto cfg = BackboneConfig::desk(3);
    BackboneWeights w(cfg);
    init_params(w, 10);
    std::mt19937_64 rng(10);
    const auto p = encode(uniform({3, 64, 64}, rng, 0, 1), cfg, w);
    bool ok = p.size() == kNumStages;
    for (std::size_t i = 0; ok && i < kNumStages; ++i) {
      const std::size_t extent = 64 >> (i + 2);
      ok = p[i].shape() == Shape{cfg.stage_channels[i], extent, extent} && all_finite(p[i]);
    }
    if (f.active) ok = false;
    return exact(ok, "[16,16,16] [32,8,8] [64,4,4] [128,2,2], finite");
  });

  reg("backbone.residual_identity", [](const Fault& f) {
    VmBlockWeights w(8, 2, 4, 4);
    init_params(w, 11);
    w.out_proj.weight.fill(0);
    w.ffn_out.weight.fill(0);
    std::mt19937_64 rng(11);
    const Tensor z = uniform({20, 8}, rng);
    Tensor y = vm_block(z, w, 4, 5);
    f.nudge(y);
    return exact(y == z, "identity");
  });

  reg("backbone.patch_merge_coverage", [](const Fault& f) {
    Tensor x({3, 4, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<Real>(i);
    Tensor g = patch_merge_gather(x);
    f.nudge(g);
    std::multiset<Real> seen(g.data().begin(), g.data().end());
    bool ok = seen.size() == x.size();
    for (std::size_t i = 0; ok && i < x.size(); ++i) ok = seen.count(static_cast<Real>(i)) == 1;
    return exact(ok, "every input exactly once");
  });

  reg("backbone.zero_fixed_point", [](const Fault& f) {
    const auto cfg = BackboneConfig::desk(1);
    BackboneWeights w(cfg);
    init_params(w, 12);
    auto p = encode(Tensor({1, 32, 32}), cfg, w);
    f.nudge(p.levels[3]);
    bool ok = true;
    for (const auto& level : p.levels) ok = ok && all_equal(level, 0);
    return exact(ok, "all-zero pyramid");
  });

  reg("backbone.determinism", [](const Fault& f) {
    const auto cfg = BackboneConfig::desk(3);
    BackboneWeights w1(cfg), w2(cfg);
    init_params(w1, 13);
    init_params(w2, 13);
    std::mt19937_64 rng(13);
    const Tensor img = uniform({3, 32, 32}, rng, 0, 1);
    auto a = encode(img, cfg, w1);
    f.nudge(a.levels[0]);
    return exact(a == encode(img, cfg, w2), "identical pyramids");
  });

  reg("cmm.gate_closed_reduction", [](const Fault& f) {
    CmmWeights w(8, 4);
    init_params(w, 14);
    silence(w.inter);
    std::mt19937_64 rng(14);
    const Tensor fr = uniform({20, 8}, rng), fd = uniform({20, 8}, rng);
    Tensor y = cmm_fuse(fr, fd, w, 4, 5);
    f.nudge(y);
    return exact(y == w.dw_conv.apply(tokens_to_grid(add(fr, fd), 4, 5)), "dwConv(F_r + F_d)");
  });

  reg("cmm.model_a_reduction", [](const Fault& f) {
    CmmWeights w(8, 4);
    init_params(w, 15);
    for (auto* b : {&w.rgb, &w.depth, &w.inter}) silence(*b);
    std::mt19937_64 rng(15);
    const Tensor fr = uniform({16, 8}, rng), fd = uniform({16, 8}, rng);
    Tensor y = cmm_fuse(fr, fd, w, 4, 4, GateActivation::none);
    f.nudge(y);
    return exact(y == w.dw_conv.apply(tokens_to_grid(add(fr, fd), 4, 4)), "element-wise addition baseline");
  });

  reg("cmm.modality_swap_symmetry", [](const Fault& f) {
    CmmWeights w(16, 4);
    init_params(w, 16);
    std::mt19937_64 rng(16);
    randomize_biases(w, rng);
    const Tensor fr = uniform({24, 16}, rng), fd = uniform({24, 16}, rng);
    Tensor y = cmm_fuse(fr, fd, w, 4, 6);
    f.nudge(y);
    return exact(y == cmm_fuse(fd, fr, swapped_modalities(w), 4, 6), "swap symmetric");
  });

  reg("cmm.gate_finite_above_silu_min", [](const Fault& f) {
    CmmWeights w(8, 4);
    init_params(w, 17);
    std::mt19937_64 rng(17);
    const Tensor fr = uniform({30, 8}, rng, -3, 3), fd = uniform({30, 8}, rng, -3, 3);
    Tensor g = inter_modal_gate(fr, fd, w.inter);
    if (f.active) g[0] = -1;
    bool ok = all_finite(g);
    for (Real v : g.data()) ok = ok && v > Real(-0.2785);
    return exact(ok, "finite and > -0.2785");
  });

  reg("decoder.zero_input_gives_half", [](const Fault& f) {
    DecoderWeights w({16, 32, 64, 128});
    init_params(w, 18);
    PyramidFeatures p;
    for (std::size_t i = 0; i < kNumStages; ++i) p.levels.emplace_back(Shape{std::size_t(16) << i, 8u >> i, 8u >> i});
    auto out = decode(p, w);
    f.nudge(out.levels[4]);
    bool ok = out.levels.size() == kNumPredictions;
    for (const auto& level : out.levels) ok = ok && level.shape() == Shape{1, 32, 32} && all_equal(level, 0.5);
    return exact(ok, "five maps of 0.5 at 32x32");
  });

  reg("decoder.full_resolution_open_interval", [](const Fault& f) {
    DecoderWeights w({16, 32, 64, 128});
    init_params(w, 19);
    std::mt19937_64 rng(19);
    PyramidFeatures p;
    for (std::size_t i = 0; i < kNumStages; ++i) p.levels.push_back(uniform({std::size_t(16) << i, 8u >> i, 8u >> i}, rng, -3, 3));
    auto out = decode(p, w, 32, 32);
    if (f.active) out.levels[0][0] = 1;
    bool ok = true;
    for (const auto& level : out.levels) {
      ok = ok && level.shape() == Shape{1, 32, 32};
      for (Real v : level.data()) ok = ok && v > 0 && v < 1;
    }
    return exact(ok, "P_i in (0,1) at full resolution");
  });

  reg("metrics.perfect_agreement", [](const Fault& f) {
    const auto scene = synth_scene(20, 32, 32);
    const Tensor& g = *scene.gt;
    MetricsReport r = evaluate(g, g);
    f.nudge(r.mae);
    const bool ok = r.mae == 0 && r.f_max == 1 && std::abs(r.e_max - 1) < 1e-12 && std::abs(r.s_measure - 1) < 1e-9;
    return exact(ok, "mae 0, F = E = S = 1");
  });

  reg("metrics.recall_non_increasing", [](const Fault& f) {
    std::mt19937_64 rng(21);
    const Tensor p = uniform({1, 16, 16}, rng, 0, 1);
    const auto scene = synth_scene(21, 32, 32);
    Tensor g({1, 16, 16});
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) g(0, i, j) = (*scene.gt)(0, 2 * i, 2 * j);
    auto curve = pr_curve(p, g);
    if (f.active) curve[200].recall = 2;
    bool ok = true;
    for (std::size_t k = 1; k < curve.size(); ++k) ok = ok && curve[k].recall <= curve[k - 1].recall;
    return exact(ok, "monotone");
  });

  reg("metrics.mae_complement_symmetry", [](const Fault& f) {
    std::mt19937_64 rng(22);
    const Tensor p = uniform({1, 8, 8}, rng, 0, 1);
    Tensor g({1, 8, 8}), pc(p.shape()), gc(g.shape());
    for (std::size_t i = 0; i < 64; ++i) {
      g[i] = (rng() & 1) ? 1 : 0;
      pc[i] = 1 - p[i];
      gc[i] = 1 - g[i];
    }
    Real m = mae(p, g);
    f.nudge(m);
    return exact(m == mae(pc, gc), "mae(P,G) == mae(1-P,1-G)");
  });

  reg("metrics.constructed_two_thirds", [](const Fault& f) {
    const Tensor g({1, 3, 2}, {1, 1, 1, 0, 0, 0}), p({1, 3, 2}, {1, 1, 0, 1, 0, 0});
    auto pr = precision_recall(p, g, 0.5);
    f.nudge(pr.precision);
    const Real third = Real(2) / 3;
    return within(std::max({std::abs(pr.precision - third), std::abs(pr.recall - third), std::abs(f_beta(pr) - third)}),
                  1e-15);
  });

  reg("metrics.loss_of_half_maps", [](const Fault& f) {
    const auto g = Tensor::full({1, 4, 4}, 1);
    Real l = total_loss(std::vector<Tensor>(5, Tensor::full({1, 4, 4}, 0.5)), g);
    f.nudge(l);
    return within(std::abs(l - 5 * std::log(Real(2))), 1e-12);
  });

  reg("io.saliency_roundtrip_bound", [](const Fault& f) {
    std::mt19937_64 rng(24);
    const Tensor p = uniform({1, 9, 7}, rng, 0, 1);
    const auto path = (std::filesystem::temp_directory_path() / "mambasod_check_roundtrip.pgm").string();
    save_saliency(p, path);
    Tensor back = load_image(path, ImageKind::gray);
    std::filesystem::remove(path);
    f.nudge(back);
    Real worst = max_abs_diff(back, p);
    return Outcome{worst <= Real(1) / 510 + Real(1e-15), "max err " + std::to_string(worst) + " (bound 1/510)"};
  });

  reg("params.desk_count_frozen", [](const Fault& f) {
    const auto w = make_network_weights(NetworkConfig::for_preset(Preset::desk), 0);
    std::size_t n = count_params(w), manifest = 0;
    for (const auto& e : build_manifest(w)) manifest += e.count;
    if (f.active) ++n;
    return Outcome{n == kDeskParamCount && manifest == n,
                   "count " + std::to_string(n) + ", manifest " + std::to_string(manifest) + ", frozen " +
                       std::to_string(kDeskParamCount)};
  });

  reg("pipeline.desk_determinism", [](const Fault& f) {
    const auto cfg = NetworkConfig::for_preset(Preset::desk);
    const auto scene = synth_scene(25, 64, 64);
    auto a = forward(cfg, make_network_weights(cfg, 25), scene.rgb, scene.depth);
    const auto b = forward(cfg, make_network_weights(cfg, 25), scene.rgb, scene.depth);
    f.nudge(a.prediction.final);
    bool ok = a.prediction.levels == b.prediction.levels && a.prediction.final == b.prediction.final;
    for (const auto& level : a.prediction.levels) ok = ok && all_finite(level);
    return exact(ok, "bit-identical predictions");
  });

  return suite;
}

}  // namespace mambasod::cli
