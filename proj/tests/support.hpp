// SPDX-License-Identifier: Apache-2.0
// Shared test helpers: finite differences and brute-force metric oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "porc/metrics/geometry.hpp"
#include "porc/numeric/tape.hpp"
#include "porc/numeric/tensor.hpp"
#include "porc/util/random.hpp"

namespace porc::test {

inline nc::Tensor random_tensor(Rng& rng, nc::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(nc::shape_size(shape));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return nc::Tensor(std::move(shape), std::move(d));
}

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central differences of `loss` against each entry of `params`. `loss` must bind the
// params itself (tape.param). Returns the worst relative error.
inline double grad_check(const std::vector<nc::Tensor*>& params, const std::function<nc::Var(nc::Tape&)>& loss,
                         double h = 1e-5, double floor = 1e-4) {
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    nc::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());
  const auto eval = [&] {
    nc::Tape tape;
    return loss(tape).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k]->mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x0 = data[i];
      data[i] = x0 + h;
      const double up = eval();
      data[i] = x0 - h;
      const double down = eval();
      data[i] = x0;
      worst = std::max(worst, rel_err(analytic[k][i], (up - down) / (2.0 * h), floor));
    }
  }
  return worst;
}

// P(score_pos > score_neg) + 0.5 P(tie), over all pairs.
inline double pair_count_auc(const std::vector<bool>& pos, const std::vector<double>& s) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      den += 1.0;
      if (s[i] > s[j]) num += 1.0;
      else if (s[i] == s[j]) num += 0.5;
    }
  return num / den;
}

inline double box_iou(const metrics::Box& a, const metrics::Box& b) {
  const double w = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double h = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = w * h;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 1.0;
}

// For every distinct confidence threshold: keep detections at or above it, match greedily
// in confidence order (input order among ties), record (recall, precision). AP integrates the
// monotone precision envelope over recall.
inline double sweep_ap(const metrics::DetectionSet& ds, int cls, double thr) {
  std::vector<const metrics::GroundTruth*> gts;
  for (const auto& g : ds.truth)
    if (g.cls == cls) gts.push_back(&g);
  if (gts.empty()) return 0.0;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ds.predictions.size(); ++i)
    if (ds.predictions[i].cls == cls) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.predictions[a].confidence > ds.predictions[b].confidence;
  });
  std::set<double, std::greater<>> thresholds;
  for (std::size_t i : order) thresholds.insert(ds.predictions[i].confidence);
  std::vector<std::pair<double, double>> pts;  // recall, precision
  for (double t : thresholds) {
    std::vector<bool> used(gts.size(), false);
    double tp = 0, fp = 0;
    for (std::size_t i : order) {
      const auto& p = ds.predictions[i];
      if (p.confidence < t) break;
      double best = -1;
      std::size_t arg = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g]->image != p.image) continue;
        const double o = box_iou(p.box, gts[g]->box);
        if (o > best) {
          best = o;
          arg = g;
        }
      }
      if (best >= thr) {
        used[arg] = true;
        tp += 1;
      } else {
        fp += 1;
      }
    }
    pts.emplace_back(tp / static_cast<double>(gts.size()), tp / (tp + fp));
  }
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double env = 0.0;
    for (std::size_t j = k; j < pts.size(); ++j) env = std::max(env, pts[j].second);
    ap += (pts[k].first - prev_r) * env;
    prev_r = pts[k].first;
  }
  return ap;
}

inline double sweep_map(const metrics::DetectionSet& ds, double thr) {
  std::set<int> classes;
  for (const auto& g : ds.truth) classes.insert(g.cls);
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (int c : classes) s += sweep_ap(ds, c, thr);
  return s / static_cast<double>(classes.size());
}

}  // namespace porc::test
