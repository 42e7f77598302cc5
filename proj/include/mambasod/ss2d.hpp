#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mambasod/ssm.hpp"
#include "mambasod/tensor.hpp"

namespace mambasod {

enum class ScanDirection { RowMajorForward, RowMajorBackward, ColMajorForward, ColMajorBackward };

/// Fixed merge order of the four directional branches.
inline constexpr std::array<ScanDirection, 4> kScanDirections = {
    ScanDirection::RowMajorForward, ScanDirection::RowMajorBackward, ScanDirection::ColMajorForward,
    ScanDirection::ColMajorBackward};

inline const char* to_string(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::RowMajorForward: return "row_forward";
    case ScanDirection::RowMajorBackward: return "row_backward";
    case ScanDirection::ColMajorForward: return "col_forward";
    case ScanDirection::ColMajorBackward: return "col_backward";
  }
  return "?";
}

/// Flat grid position (h*W + w) visited at sequence step l.
inline std::size_t scan_position(ScanDirection dir, std::size_t height, std::size_t width, std::size_t l) {
  const std::size_t count = height * width;
  switch (dir) {
    case ScanDirection::RowMajorForward: return l;
    case ScanDirection::RowMajorBackward: return count - 1 - l;
    case ScanDirection::ColMajorForward: return (l % height) * width + l / height;
    case ScanDirection::ColMajorBackward: {
      const std::size_t f = count - 1 - l;
      return (f % height) * width + f / height;
    }
  }
  return l;
}

inline std::vector<std::size_t> scan_order(ScanDirection dir, std::size_t height, std::size_t width) {
  std::vector<std::size_t> order(height * width);
  for (std::size_t l = 0; l < order.size(); ++l) order[l] = scan_position(dir, height, width, l);
  return order;
}

/// Serializes a [C,H,W] map into an [H*W, C] token sequence along one direction.
inline Tensor expand(const Tensor& x, ScanDirection dir) {
  require_rank(x, 3, "expand input");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2), plane = height * width;
  Tensor seq({plane, channels});
  for (std::size_t l = 0; l < plane; ++l) {
    const std::size_t pos = scan_position(dir, height, width, l);
    Real* sr = seq.row(l);
    for (std::size_t c = 0; c < channels; ++c) sr[c] = x.raw()[c * plane + pos];
  }
  return seq;
}

/// Inverse of expand for the same direction.
inline Tensor unexpand(const Tensor& seq, ScanDirection dir, std::size_t height, std::size_t width) {
  require_rank(seq, 2, "unexpand input");
  const std::size_t plane = height * width;
  if (seq.dim(0) != plane) {
    throw DimensionError("unexpand: sequence length " + std::to_string(seq.dim(0)) + " does not match " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t channels = seq.dim(1);
  Tensor x({channels, height, width});
  for (std::size_t l = 0; l < plane; ++l) {
    const std::size_t pos = scan_position(dir, height, width, l);
    const Real* sr = seq.row(l);
    for (std::size_t c = 0; c < channels; ++c) x.raw()[c * plane + pos] = sr[c];
  }
  return x;
}

using Ss2dParams = std::array<SelectiveSsmParams, 4>;

inline Ss2dParams make_ss2d_params(std::size_t channels, std::size_t state_dim) {
  const std::size_t rank = default_delta_rank(channels);
  return {SelectiveSsmParams::zeros(channels, state_dim, rank), SelectiveSsmParams::zeros(channels, state_dim, rank),
          SelectiveSsmParams::zeros(channels, state_dim, rank), SelectiveSsmParams::zeros(channels, state_dim, rank)};
}

template <class Self, class F>
void for_each_ss2d(Self& params, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    SelectiveSsmParams::for_each(params[i], prefix + to_string(kScanDirections[i]) + ".", f);
  }
}

/// Four directional selective scans merged by elementwise sum onto the input grid.
inline Tensor ss2d(const Tensor& x, const Ss2dParams& params) {
  require_rank(x, 3, "ss2d input");
  const std::size_t height = x.dim(1), width = x.dim(2);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < kScanDirections.size(); ++i) {
    const ScanDirection dir = kScanDirections[i];
    const Tensor branch = unexpand(selective_scan(params[i], expand(x, dir)), dir, height, width);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += branch[k];
  }
  return y;
}

}  // namespace mambasod
