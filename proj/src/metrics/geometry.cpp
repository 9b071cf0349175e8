// SPDX-License-Identifier: Apache-2.0
#include "porc/metrics/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "porc/error.hpp"

namespace porc::metrics {

void validate_box(const Box& b) {
  if (!(b.x2 > b.x1) || !(b.y2 > b.y1) || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) ||
      !std::isfinite(b.y2)) {
    throw data_error("box: need x2 > x1 and y2 > y1");
  }
}

double area(const Box& b) { return (b.x2 - b.x1) * (b.y2 - b.y1); }

namespace {

double intersection(const Box& a, const Box& b) {
  validate_box(a);
  validate_box(b);
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return w > 0 && h > 0 ? w * h : 0.0;
}

std::pair<std::size_t, std::size_t> counts(const Mask& a, const Mask& b, std::size_t& sa, std::size_t& sb) {
  if (a.width != b.width || a.height != b.height || a.cells.size() != a.width * a.height ||
      b.cells.size() != b.width * b.height) {
    throw shape_error("mask: shapes differ");
  }
  std::size_t inter = 0, uni = 0;
  sa = sb = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const bool x = a.cells[i] != 0, y = b.cells[i] != 0;
    inter += x && y;
    uni += x || y;
    sa += x;
    sb += y;
  }
  return {inter, uni};
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double i = intersection(a, b);
  return i / (area(a) + area(b) - i);
}

double dice(const Box& a, const Box& b) { return 2.0 * intersection(a, b) / (area(a) + area(b)); }

double iou(const Mask& a, const Mask& b) {
  std::size_t sa = 0, sb = 0;
  const auto [inter, uni] = counts(a, b, sa, sb);
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const Mask& a, const Mask& b) {
  std::size_t sa = 0, sb = 0;
  const auto [inter, uni] = counts(a, b, sa, sb);
  return sa + sb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

double average_precision(const DetectionSet& dets, int cls, double thr) {
  if (!(thr > 0.0 && thr < 1.0)) throw data_error("mean_ap: IoU threshold must lie in (0, 1)");
  std::vector<std::size_t> gts;
  for (std::size_t i = 0; i < dets.truth.size(); ++i)
    if (dets.truth[i].cls == cls) gts.push_back(i);
  if (gts.empty()) throw data_error("mean_ap: class " + std::to_string(cls) + " has no ground truth");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.predictions.size(); ++i)
    if (dets.predictions[i].cls == cls) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets.predictions[a].confidence > dets.predictions[b].confidence;
  });

  std::vector<bool> used(gts.size(), false);
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Detection& d = dets.predictions[order[k]];
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const GroundTruth& g = dets.truth[gts[j]];
      if (used[j] || g.image != d.image) continue;
      const double v = iou(d.box, g.box);
      if (v >= thr && v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size()) {
      used[best_j] = true;
      ++tp;
    }
    const bool level_end = k + 1 == order.size() || dets.predictions[order[k + 1]].confidence != d.confidence;
    if (level_end) {
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }
  }
  // All-point interpolation: envelope from the right, then sum over recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

double mean_ap(const DetectionSet& dets, double thr) {
  std::vector<int> classes;
  for (const auto& g : dets.truth) classes.push_back(g.cls);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.empty()) throw data_error("mean_ap: no ground truth boxes");
  double s = 0.0;
  for (int c : classes) s += average_precision(dets, c, thr);
  return s / static_cast<double>(classes.size());
}

SegmentationStats segmentation_stats(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t C) {
  if (pred.size() != truth.size()) throw shape_error("segmentation: grids differ in size");
  if (C == 0) throw data_error("segmentation: need at least one class");
  std::vector<std::size_t> conf(C * C, 0);  // [truth][pred]
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= C || static_cast<std::size_t>(truth[i]) >= C) {
      throw data_error("segmentation: label outside [0, " + std::to_string(C) + ")");
    }
    ++conf[static_cast<std::size_t>(truth[i]) * C + static_cast<std::size_t>(pred[i])];
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SegmentationStats s;
  s.cpa.assign(C, nan);
  s.class_iou.assign(C, nan);
  s.class_dice.assign(C, nan);
  double mpa = 0.0, miou = 0.0, mdice = 0.0;
  std::size_t n_cpa = 0, n_iou = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t t = 0, p = 0;
    for (std::size_t k = 0; k < C; ++k) {
      t += conf[c * C + k];
      p += conf[k * C + c];
    }
    const double tp = static_cast<double>(conf[c * C + c]);
    if (t > 0) {
      s.cpa[c] = tp / static_cast<double>(t);
      mpa += s.cpa[c];
      ++n_cpa;
    }
    if (t + p > 0) {
      s.class_iou[c] = tp / static_cast<double>(t + p - conf[c * C + c]);
      s.class_dice[c] = 2.0 * tp / static_cast<double>(t + p);
      miou += s.class_iou[c];
      mdice += s.class_dice[c];
      ++n_iou;
    }
  }
  s.mpa = n_cpa ? mpa / static_cast<double>(n_cpa) : 1.0;
  s.miou = n_iou ? miou / static_cast<double>(n_iou) : 1.0;
  s.mean_dice = n_iou ? mdice / static_cast<double>(n_iou) : 1.0;
  return s;
}

}  // namespace porc::metrics
