#pragma once

// Weight surgery shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cstddef>

#include "mambasod/cmm.hpp"

namespace fixture {

using mambasod::CmmBranchWeights;
using mambasod::CmmWeights;
using mambasod::LinearWeights;
using mambasod::Tensor;

inline void swap_halves(Tensor& v) {
  const std::size_t half = v.size() / 2;
  std::swap_ranges(v.raw(), v.raw() + half, v.raw() + half);
}

/// Weights that compute the same fusion when the rgb and depth inputs are exchanged.
inline CmmWeights swap_modalities(const CmmWeights& w) {
  CmmWeights s = w;
  std::swap(s.rgb, s.depth);
  swap_halves(s.inter.norm.gamma);
  swap_halves(s.inter.norm.beta);
  Tensor& m = s.inter.mlp.weight;
  const std::size_t rows = m.dim(0), half = m.dim(1) / 2;
  for (std::size_t o = 0; o < rows; ++o) std::swap_ranges(m.row(o), m.row(o) + half, m.row(o) + half);
  return s;
}

inline void zero_linear(LinearWeights& l) {
  l.weight.fill(0);
  if (l.bias) l.bias->fill(0);
}

/// Makes one branch's scan output identically zero: no state readout and no skip.
inline void silence_branch(CmmBranchWeights& b) {
  b.ssm.c_proj.fill(0);
  b.ssm.d_skip.fill(0);
}

}  // namespace fixture
