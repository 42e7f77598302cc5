#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "mambasod/tensor.hpp"

namespace mambasod {

/// Spatially registered RGB-D sample with optional binary ground truth.
struct SaliencyPair {
  Tensor rgb;    // [3,H,W] in [0,1]
  Tensor depth;  // [1,H,W] in [0,1]
  std::optional<Tensor> gt;  // [1,H,W], values {0,1}
};

/// Uniform double in [0,1) from the top 53 bits of a 64-bit engine (platform independent).
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/**
 * Deterministic synthetic RGB-D scene.
 *
 * One to three rectangles or ellipses form the salient objects. Their pixels
 * get a flat random colour over a striped background plus noise; in depth
 * they sit on a near-constant low plateau while the background is a vertical
 * gradient.
 */
inline SaliencyPair synth_scene(std::uint64_t seed, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw DimensionError("synth_scene: extents " + std::to_string(height) + "x" + std::to_string(width) +
                         " must be positive multiples of 32");
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); };

  SaliencyPair pair{Tensor({3, height, width}), Tensor({1, height, width}), Tensor({1, height, width})};
  Tensor& gt = *pair.gt;

  const double bg_color[3] = {uniform(0.2, 0.6), uniform(0.2, 0.6), uniform(0.2, 0.6)};
  const double stripe_freq = uniform(0.15, 0.45);
  const double stripe_phase = uniform(0.0, 2 * std::numbers::pi);

  const auto objects = static_cast<int>(1 + rng() % 3);
  const double min_extent = static_cast<double>(std::min(height, width));
  for (int o = 0; o < objects; ++o) {
    const bool ellipse = (rng() & 1u) != 0;
    const double cy = uniform(0.25, 0.75) * static_cast<double>(height);
    const double cx = uniform(0.25, 0.75) * static_cast<double>(width);
    const double ry = uniform(0.08, 0.22) * min_extent;
    const double rx = uniform(0.08, 0.22) * min_extent;
    const double color[3] = {uniform(0.6, 1.0), uniform(0.0, 1.0), uniform(0.0, 0.4)};
    const double near = uniform(0.05, 0.3);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double dy = (static_cast<double>(i) + 0.5 - cy) / ry;
        const double dx = (static_cast<double>(j) + 0.5 - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        gt(0, i, j) = 1;
        for (std::size_t c = 0; c < 3; ++c) pair.rgb(c, i, j) = color[c];
        pair.depth(0, i, j) = near;
      }
    }
  }

  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const bool object = gt(0, i, j) > 0.5;
      const double noise = uniform(-0.04, 0.04);
      if (object) {
        for (std::size_t c = 0; c < 3; ++c) pair.rgb(c, i, j) = std::clamp(pair.rgb(c, i, j) + noise, 0.0, 1.0);
        pair.depth(0, i, j) = std::clamp(pair.depth(0, i, j) + 0.2 * noise, 0.0, 1.0);
      } else {
        const double stripe = 0.12 * std::sin(stripe_freq * static_cast<double>(i + 2 * j) + stripe_phase);
        for (std::size_t c = 0; c < 3; ++c) pair.rgb(c, i, j) = std::clamp(bg_color[c] + stripe + noise, 0.0, 1.0);
        const double gradient = 0.6 + 0.4 * static_cast<double>(i) / static_cast<double>(height);
        pair.depth(0, i, j) = std::clamp(gradient + 0.5 * noise, 0.0, 1.0);
      }
    }
  }
  return pair;
}

}  // namespace mambasod
