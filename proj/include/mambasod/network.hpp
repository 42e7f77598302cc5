#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mambasod/backbone.hpp"
#include "mambasod/cmm.hpp"
#include "mambasod/decoder.hpp"
#include "mambasod/params.hpp"

namespace mambasod {

enum class Preset { desk, full };

inline const char* to_string(Preset p) { return p == Preset::full ? "full" : "desk"; }

inline Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::desk;
  if (s == "full") return Preset::full;
  throw std::invalid_argument("unknown preset '" + s + "' (expected desk|full)");
}

inline GateActivation parse_gate_activation(const std::string& s) {
  if (s == "silu") return GateActivation::silu;
  if (s == "none") return GateActivation::none;
  throw std::invalid_argument("unknown gate activation '" + s + "' (expected silu|none)");
}

inline const char* to_string(GateActivation g) { return g == GateActivation::silu ? "silu" : "none"; }

struct NetworkConfig {
  Preset preset = Preset::desk;
  BackboneConfig rgb = BackboneConfig::desk(3);
  BackboneConfig depth = BackboneConfig::desk(1);
  GateActivation gate = GateActivation::silu;
  std::size_t input_h = 64;
  std::size_t input_w = 64;

  static NetworkConfig for_preset(Preset preset) {
    NetworkConfig cfg;
    cfg.preset = preset;
    if (preset == Preset::full) {
      cfg.rgb = BackboneConfig::full(3);
      cfg.depth = BackboneConfig::full(1);
      cfg.input_h = cfg.input_w = 320;
    }
    return cfg;
  }

  const std::array<std::size_t, kNumStages>& stage_channels() const { return rgb.stage_channels; }
};

struct NetworkWeights {
  BackboneWeights rgb;
  BackboneWeights depth;
  std::vector<CmmWeights> cmm;  // one per stage
  DecoderWeights decoder;

  explicit NetworkWeights(const NetworkConfig& cfg)
      : rgb(cfg.rgb), depth(cfg.depth), decoder(cfg.stage_channels()) {
    if (cfg.rgb.stage_channels != cfg.depth.stage_channels) {
      throw std::invalid_argument("NetworkWeights: rgb and depth streams must share stage channels");
    }
    for (std::size_t c : cfg.stage_channels()) cmm.emplace_back(c, cfg.rgb.state_dim);
  }

  template <class Self, class F>
  static void for_each(Self& self, const std::string& p, F&& f) {
    BackboneWeights::for_each(self.rgb, p + "rgb_backbone.", f);
    BackboneWeights::for_each(self.depth, p + "depth_backbone.", f);
    for (std::size_t i = 0; i < self.cmm.size(); ++i) {
      CmmWeights::for_each(self.cmm[i], p + "cmm" + std::to_string(i + 1) + ".", f);
    }
    DecoderWeights::for_each(self.decoder, p + "decoder.", f);
  }
};

/// Allocates and seed-initializes every learnable parameter.
inline NetworkWeights make_network_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkWeights w(cfg);
  init_params(w, seed);
  return w;
}

struct ModuleParamCount {
  std::string module;
  std::size_t count;
};

/// Learnable-parameter counts of the top-level modules, in visit order.
inline std::vector<ModuleParamCount> param_breakdown(const NetworkWeights& w) {
  std::vector<ModuleParamCount> out{{"rgb_backbone", count_params(w.rgb)}, {"depth_backbone", count_params(w.depth)}};
  std::size_t cmm_total = 0;
  for (const auto& c : w.cmm) cmm_total += count_params(c);
  out.push_back({"cmm", cmm_total});
  out.push_back({"decoder", count_params(w.decoder)});
  return out;
}

struct ForwardResult {
  PyramidFeatures rgb;
  PyramidFeatures depth;
  PyramidFeatures fused;
  DecoderOutput prediction;
};

/// End-to-end pass: dual encoder, per-stage cross-modal fusion, refinement decoder.
inline ForwardResult forward(const NetworkConfig& cfg, const NetworkWeights& w, const Tensor& rgb,
                             const Tensor& depth) {
  ForwardResult r;
  std::tie(r.rgb, r.depth) = dual_encode(rgb, depth, cfg.rgb, cfg.depth, w.rgb, w.depth);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t h = r.rgb[s].dim(1), wd = r.rgb[s].dim(2);
    r.fused.levels.push_back(
        cmm_fuse(grid_to_tokens(r.rgb[s]), grid_to_tokens(r.depth[s]), w.cmm[s], h, wd, cfg.gate));
  }
  r.prediction = decode(r.fused, w.decoder, rgb.dim(1), rgb.dim(2));
  return r;
}

}  // namespace mambasod
