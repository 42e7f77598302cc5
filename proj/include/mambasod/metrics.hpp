#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mambasod/tensor.hpp"

namespace mambasod {

inline constexpr Real kBetaSquared = Real(0.3);
inline constexpr Real kStructureAlpha = Real(0.5);
inline constexpr std::size_t kDefaultThresholds = 256;
inline constexpr Real kBceEps = Real(1e-7);
inline constexpr Real kMetricEps = std::numeric_limits<Real>::epsilon();

/// Height and width of a single-plane map stored as [H,W] or [1,H,W].
inline std::pair<std::size_t, std::size_t> plane_extent(const Tensor& t) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw DimensionError("expected a single-plane map [H,W] or [1,H,W], got " + shape_str(t.shape()));
}

inline void require_pair(const Tensor& pred, const Tensor& gt, const char* what) {
  if (plane_extent(pred) != plane_extent(gt)) {
    throw DimensionError(std::string(what) + ": prediction " + shape_str(pred.shape()) + " and ground truth " +
                         shape_str(gt.shape()) + " differ in extent");
  }
}

inline void require_binary(const Tensor& gt, const char* what) {
  for (Real v : gt.data()) {
    if (v != 0 && v != 1) throw std::invalid_argument(std::string(what) + ": ground truth must be binary");
  }
}

/// Threshold k of an evenly spaced sweep over [0,1].
inline Real sweep_threshold(std::size_t k, std::size_t count) {
  return static_cast<Real>(k) / static_cast<Real>(count - 1);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy with predictions clipped to [eps, 1-eps].
inline Real bce_loss(const Tensor& pred, const Tensor& gt, Real eps = kBceEps) {
  require_pair(pred, gt, "bce_loss");
  Real sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Real p = std::clamp(pred[i], eps, Real(1) - eps);
    sum += -(gt[i] * std::log(p) + (Real(1) - gt[i]) * std::log(Real(1) - p));
  }
  return sum / static_cast<Real>(pred.size());
}

/// Unweighted multi-level sum of per-level BCE.
inline Real total_loss(const std::vector<Tensor>& preds, const Tensor& gt) {
  if (preds.empty()) throw std::invalid_argument("total_loss: no predictions");
  Real total = 0;
  for (const auto& p : preds) total += bce_loss(p, gt);
  return total;
}

// ---------------------------------------------------------------------------
// Threshold sweeps
// ---------------------------------------------------------------------------

struct PrecisionRecall {
  Real precision = 1;
  Real recall = 0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// No predicted positives gives precision 1; an empty ground truth gives recall 0.
inline PrecisionRecall to_precision_recall(const Confusion& c) {
  PrecisionRecall pr;
  pr.precision = c.tp + c.fp > 0 ? static_cast<Real>(c.tp) / static_cast<Real>(c.tp + c.fp) : Real(1);
  pr.recall = c.tp + c.fn > 0 ? static_cast<Real>(c.tp) / static_cast<Real>(c.tp + c.fn) : Real(0);
  return pr;
}

inline Confusion confusion_at(const Tensor& pred, const Tensor& gt, Real threshold) {
  require_pair(pred, gt, "confusion_at");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool positive = pred[i] >= threshold;
    const bool object = gt[i] > Real(0.5);
    if (positive && object) ++c.tp;
    else if (positive) ++c.fp;
    else if (object) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline PrecisionRecall precision_recall(const Tensor& pred, const Tensor& gt, Real threshold) {
  if (threshold < 0 || threshold > 1) throw std::invalid_argument("precision_recall: threshold outside [0,1]");
  return to_precision_recall(confusion_at(pred, gt, threshold));
}

inline Real f_beta(const PrecisionRecall& pr, Real beta_squared = kBetaSquared) {
  const Real denom = beta_squared * pr.precision + pr.recall;
  if (denom == 0) return 0;
  return (Real(1) + beta_squared) * pr.precision * pr.recall / denom;
}

/// Confusion counts for every threshold of the sweep (P >= t_k is positive),
/// computed from one pass with a per-pixel threshold histogram.
inline std::vector<Confusion> confusion_sweep(const Tensor& pred, const Tensor& gt,
                                              std::size_t count = kDefaultThresholds) {
  require_pair(pred, gt, "confusion_sweep");
  if (count < 2) throw std::invalid_argument("confusion_sweep: need at least 2 thresholds");
  std::vector<Real> thr(count);
  for (std::size_t k = 0; k < count; ++k) thr[k] = sweep_threshold(k, count);

  // hist[k]: pixels whose highest passed threshold index is k.
  std::vector<std::size_t> obj_hist(count, 0), bg_hist(count, 0);
  std::size_t objects = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Real p = pred[i];
    const bool object = gt[i] > Real(0.5);
    objects += object;
    if (!(p >= thr[0])) continue;
    auto k = static_cast<std::size_t>(std::clamp(std::floor(p * static_cast<Real>(count - 1)), Real(0),
                                                  static_cast<Real>(count - 1)));
    while (k + 1 < count && thr[k + 1] <= p) ++k;
    while (k > 0 && thr[k] > p) --k;
    (object ? obj_hist : bg_hist)[k]++;
  }
  std::vector<Confusion> sweep(count);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = count; k-- > 0;) {
    tp += obj_hist[k];
    fp += bg_hist[k];
    Confusion& c = sweep[k];
    c.tp = tp;
    c.fp = fp;
    c.fn = objects - tp;
    c.tn = pred.size() - objects - fp;
  }
  return sweep;
}

/// (precision, recall) per threshold, ascending.
inline std::vector<PrecisionRecall> pr_curve(const Tensor& pred, const Tensor& gt,
                                             std::size_t count = kDefaultThresholds) {
  std::vector<PrecisionRecall> curve;
  for (const auto& c : confusion_sweep(pred, gt, count)) curve.push_back(to_precision_recall(c));
  return curve;
}

inline std::vector<Real> f_measure_curve(const Tensor& pred, const Tensor& gt, std::size_t count = kDefaultThresholds,
                                         Real beta_squared = kBetaSquared) {
  std::vector<Real> curve;
  for (const auto& pr : pr_curve(pred, gt, count)) curve.push_back(f_beta(pr, beta_squared));
  return curve;
}

inline Real f_measure_max(const Tensor& pred, const Tensor& gt, std::size_t count = kDefaultThresholds,
                          Real beta_squared = kBetaSquared) {
  const auto curve = f_measure_curve(pred, gt, count, beta_squared);
  return *std::max_element(curve.begin(), curve.end());
}

// ---------------------------------------------------------------------------
// Enhanced alignment measure
// ---------------------------------------------------------------------------

namespace detail {

inline Real enhanced_alignment(Real phi_gt, Real phi_fm) {
  const Real denom = phi_gt * phi_gt + phi_fm * phi_fm;
  const Real align = denom == 0 ? Real(0) : Real(2) * phi_gt * phi_fm / denom;
  return (Real(1) + align) * (Real(1) + align) / Real(4);
}

// E-measure of a binarized map from its confusion counts: only the four
// (gt, fm) value combinations occur, so the pixel mean reduces to a weighted sum.
inline Real e_measure_from_confusion(const Confusion& c) {
  const auto n = static_cast<Real>(c.tp + c.fp + c.fn + c.tn);
  const auto objects = static_cast<Real>(c.tp + c.fn);
  const auto positives = static_cast<Real>(c.tp + c.fp);
  if (objects == 0) return Real(1) - positives / n;
  if (objects == n) return positives / n;
  const Real mean_gt = objects / n, mean_fm = positives / n;
  const Real sum = static_cast<Real>(c.tp) * enhanced_alignment(1 - mean_gt, 1 - mean_fm) +
                   static_cast<Real>(c.fp) * enhanced_alignment(-mean_gt, 1 - mean_fm) +
                   static_cast<Real>(c.fn) * enhanced_alignment(1 - mean_gt, -mean_fm) +
                   static_cast<Real>(c.tn) * enhanced_alignment(-mean_gt, -mean_fm);
  return sum / n;
}

}  // namespace detail

/// E-measure of the map binarized at one threshold.
inline Real e_measure_at(const Tensor& pred, const Tensor& gt, Real threshold) {
  return detail::e_measure_from_confusion(confusion_at(pred, gt, threshold));
}

inline std::vector<Real> e_measure_curve(const Tensor& pred, const Tensor& gt,
                                         std::size_t count = kDefaultThresholds) {
  std::vector<Real> curve;
  for (const auto& c : confusion_sweep(pred, gt, count)) curve.push_back(detail::e_measure_from_confusion(c));
  return curve;
}

inline Real e_measure_max(const Tensor& pred, const Tensor& gt, std::size_t count = kDefaultThresholds) {
  const auto curve = e_measure_curve(pred, gt, count);
  return *std::max_element(curve.begin(), curve.end());
}

// ---------------------------------------------------------------------------
// Structure measure
// ---------------------------------------------------------------------------
//
// Object term: S_o = u * O(P on fg) + (1 - u) * O(1 - P on bg), u = mean(G),
//   O(x) = 2 mean(x) / (mean(x)^2 + 1 + std(x) + eps), std with n-1 normalisation.
// Region term: G is split into four quadrants at its (rounded) centroid; each
//   quadrant pair scores ssim = 4 mx my sxy / ((mx^2 + my^2)(sx + sy) + eps),
//   weighted by the quadrant's share of the image.
// Degenerate ground truth: all background gives 1 - mean(P), all object mean(P).

namespace detail {

inline Real object_score(const Tensor& values, const Tensor& gt, bool foreground) {
  Real sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((gt[i] > Real(0.5)) == foreground) {
      sum += values[i];
      ++n;
    }
  }
  if (n == 0) return 0;
  const Real mean = sum / static_cast<Real>(n);
  Real sq = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((gt[i] > Real(0.5)) == foreground) sq += (values[i] - mean) * (values[i] - mean);
  }
  const Real sd = n > 1 ? std::sqrt(sq / static_cast<Real>(n - 1)) : Real(0);
  return Real(2) * mean / (mean * mean + Real(1) + sd + kMetricEps);
}

struct Region {
  std::size_t r0, r1, c0, c1;  // half-open rows/cols
  std::size_t area() const { return (r1 - r0) * (c1 - c0); }
};

inline Real region_ssim(const Tensor& pred, const Tensor& gt, std::size_t width, const Region& r) {
  const std::size_t n = r.area();
  Real sx = 0, sy = 0;
  for (std::size_t i = r.r0; i < r.r1; ++i) {
    for (std::size_t j = r.c0; j < r.c1; ++j) {
      sx += pred[i * width + j];
      sy += gt[i * width + j];
    }
  }
  const Real mx = sx / static_cast<Real>(n), my = sy / static_cast<Real>(n);
  Real vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = r.r0; i < r.r1; ++i) {
    for (std::size_t j = r.c0; j < r.c1; ++j) {
      const Real dx = pred[i * width + j] - mx, dy = gt[i * width + j] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  const Real norm = static_cast<Real>(n) - 1 + kMetricEps;
  vx /= norm;
  vy /= norm;
  cxy /= norm;
  const Real alpha = 4 * mx * my * cxy;
  const Real beta = (mx * mx + my * my) * (vx + vy);
  if (alpha != 0) return alpha / (beta + kMetricEps);
  if (beta == 0) return 1;
  return 0;
}

/// 1-based split column/row at the rounded foreground centroid (half-to-even rounding).
inline std::pair<std::size_t, std::size_t> centroid_split(const Tensor& gt, std::size_t height, std::size_t width) {
  Real sum_r = 0, sum_c = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      if (gt[i * width + j] > Real(0.5)) {
        sum_r += static_cast<Real>(i);
        sum_c += static_cast<Real>(j);
        ++n;
      }
    }
  }
  Real x, y;
  if (n == 0) {
    x = std::nearbyint(static_cast<Real>(width) / 2);
    y = std::nearbyint(static_cast<Real>(height) / 2);
  } else {
    x = std::nearbyint(sum_c / static_cast<Real>(n));
    y = std::nearbyint(sum_r / static_cast<Real>(n));
  }
  return {static_cast<std::size_t>(x) + 1, static_cast<std::size_t>(y) + 1};
}

}  // namespace detail

inline Real s_object(const Tensor& pred, const Tensor& gt) {
  require_pair(pred, gt, "s_object");
  Tensor fg(pred.shape()), bg(pred.shape());
  Real u = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    fg[i] = pred[i] * gt[i];
    bg[i] = (Real(1) - pred[i]) * (Real(1) - gt[i]);
    u += gt[i];
  }
  u /= static_cast<Real>(pred.size());
  return u * detail::object_score(fg, gt, true) + (Real(1) - u) * detail::object_score(bg, gt, false);
}

inline Real s_region(const Tensor& pred, const Tensor& gt) {
  require_pair(pred, gt, "s_region");
  const auto [height, width] = plane_extent(gt);
  const auto [x, y] = detail::centroid_split(gt, height, width);
  const std::size_t cx = std::min(x, width), cy = std::min(y, height);
  const detail::Region regions[4] = {
      {0, cy, 0, cx}, {0, cy, cx, width}, {cy, height, 0, cx}, {cy, height, cx, width}};
  const Real area = static_cast<Real>(height * width);
  Real score = 0;
  for (const auto& r : regions) {
    if (r.area() == 0) continue;
    score += static_cast<Real>(r.area()) / area * detail::region_ssim(pred, gt, width, r);
  }
  return score;
}

inline Real s_measure(const Tensor& pred, const Tensor& gt, Real alpha = kStructureAlpha) {
  require_pair(pred, gt, "s_measure");
  Real mean_gt = 0, mean_pred = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    mean_gt += gt[i];
    mean_pred += pred[i];
  }
  mean_gt /= static_cast<Real>(gt.size());
  mean_pred /= static_cast<Real>(gt.size());
  Real q;
  if (mean_gt == 0) {
    q = Real(1) - mean_pred;
  } else if (mean_gt == 1) {
    q = mean_pred;
  } else {
    q = alpha * s_object(pred, gt) + (Real(1) - alpha) * s_region(pred, gt);
  }
  return std::clamp(q, Real(0), Real(1));
}

// ---------------------------------------------------------------------------
// MAE and reports
// ---------------------------------------------------------------------------

inline Real mae(const Tensor& pred, const Tensor& gt) {
  require_pair(pred, gt, "mae");
  Real sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - gt[i]);
  return sum / static_cast<Real>(pred.size());
}

struct MetricsReport {
  Real mae = 0;
  Real f_max = 0;
  Real e_max = 0;
  Real s_measure = 0;
  std::vector<PrecisionRecall> pr_curve;
};

/// All metrics for one prediction / ground-truth pair.
inline MetricsReport evaluate(const Tensor& pred, const Tensor& gt, std::size_t count = kDefaultThresholds) {
  require_pair(pred, gt, "evaluate");
  require_binary(gt, "evaluate");
  MetricsReport r;
  r.mae = mae(pred, gt);
  r.s_measure = s_measure(pred, gt);
  const auto sweep = confusion_sweep(pred, gt, count);
  for (const auto& c : sweep) {
    const auto pr = to_precision_recall(c);
    r.pr_curve.push_back(pr);
    r.f_max = std::max(r.f_max, f_beta(pr));
    r.e_max = std::max(r.e_max, detail::e_measure_from_confusion(c));
  }
  return r;
}

/// Dataset aggregate: per-image curves averaged per threshold, then maximized.
class DatasetMetrics {
 public:
  explicit DatasetMetrics(std::size_t count = kDefaultThresholds)
      : count_(count), precision_(count, 0), recall_(count, 0), f_(count, 0), e_(count, 0) {}

  MetricsReport add(const Tensor& pred, const Tensor& gt) {
    MetricsReport r = evaluate(pred, gt, count_);
    const auto sweep = confusion_sweep(pred, gt, count_);
    for (std::size_t k = 0; k < count_; ++k) {
      precision_[k] += r.pr_curve[k].precision;
      recall_[k] += r.pr_curve[k].recall;
      f_[k] += f_beta(r.pr_curve[k]);
      e_[k] += detail::e_measure_from_confusion(sweep[k]);
    }
    mae_ += r.mae;
    s_ += r.s_measure;
    ++images_;
    return r;
  }

  std::size_t images() const { return images_; }

  MetricsReport aggregate() const {
    if (images_ == 0) throw std::logic_error("DatasetMetrics: no images accumulated");
    const auto n = static_cast<Real>(images_);
    MetricsReport r;
    r.mae = mae_ / n;
    r.s_measure = s_ / n;
    for (std::size_t k = 0; k < count_; ++k) {
      r.pr_curve.push_back({precision_[k] / n, recall_[k] / n});
      r.f_max = std::max(r.f_max, f_[k] / n);
      r.e_max = std::max(r.e_max, e_[k] / n);
    }
    return r;
  }

 private:
  std::size_t count_;
  std::vector<Real> precision_, recall_, f_, e_;
  Real mae_ = 0, s_ = 0;
  std::size_t images_ = 0;
};

}  // namespace mambasod
