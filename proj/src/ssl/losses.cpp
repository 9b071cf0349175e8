// SPDX-License-Identifier: Apache-2.0
#include "porc/ssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "porc/error.hpp"
#include "porc/util/random.hpp"

namespace porc::ssl {

using nc::Tensor;
using nc::Var;

Tensor teacher_probs(const Tensor& logits, const Tensor& center, double teacher_temp) {
  if (!(teacher_temp > 0.0)) throw data_error("teacher temperature must be positive");
  const std::size_t m = logits.rows(), k = logits.cols();
  if (center.size() != k) {
    throw shape_error("teacher_probs: center has " + std::to_string(center.size()) + " entries, logits have " +
                      std::to_string(k) + " prototypes");
  }
  std::vector<double> out(m * k);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, (logits.at(r, c) - center[c]) / teacher_temp);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += (out[r * k + c] = std::exp((logits.at(r, c) - center[c]) / teacher_temp - mx));
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] /= z;
  }
  return Tensor({m, k}, std::move(out));
}

double mean_entropy(const Tensor& probs) {
  const std::size_t m = probs.rows(), k = probs.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      const double p = probs.at(r, c);
      if (p > 0.0) total -= p * std::log(p);
    }
  return total / static_cast<double>(m);
}

Var dino_loss(const Tensor& teacher_logits, Var student_logits, const Tensor& center, double teacher_temp,
              double student_temp, DinoPairing pairing) {
  const std::size_t vt = teacher_logits.rows(), k = teacher_logits.cols();
  const std::size_t vs = student_logits.value().rows();
  if (student_logits.value().cols() != k) {
    throw shape_error("dino_loss: teacher has " + std::to_string(k) + " prototypes, student " +
                      std::to_string(student_logits.value().cols()));
  }
  nc::Tape& tape = *student_logits.tape;
  const Tensor pt = teacher_probs(teacher_logits, center, teacher_temp);
  std::vector<double> pair_mask(vt * vs, 1.0);
  double pairs = static_cast<double>(vt * vs);
  if (pairing.skip_same_view) {
    for (std::size_t i = 0; i < std::min(vt, vs); ++i) {
      pair_mask[i * vs + i] = 0.0;
      pairs -= 1.0;
    }
  }
  if (pairs <= 0.0) throw data_error("dino_loss: no cross-view pairs");
  Var log_ps = nc::log_softmax(student_logits, student_temp);
  // ce[i][j] = -sum_k pt[i][k] * log ps[j][k]
  Var ce = nc::matmul(tape.constant(pt), nc::transpose(log_ps));
  Var masked = nc::mul(ce, tape.constant(Tensor({vt, vs}, std::move(pair_mask))));
  return nc::scale(nc::sum(masked), -1.0 / pairs);
}

Var ibot_loss(const Tensor& teacher_token_logits, Var student_token_logits, const std::vector<bool>& mask,
              const Tensor& center, double teacher_temp, double student_temp) {
  const std::size_t T = teacher_token_logits.rows();
  if (student_token_logits.value().rows() != T || mask.size() != T) {
    throw shape_error("ibot_loss: token counts differ (teacher " + std::to_string(T) + ", student " +
                      std::to_string(student_token_logits.value().rows()) + ", mask " + std::to_string(mask.size()) +
                      ")");
  }
  if (student_token_logits.value().cols() != teacher_token_logits.cols()) {
    throw shape_error("ibot_loss: prototype counts differ");
  }
  nc::Tape& tape = *student_token_logits.tape;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < T; ++i)
    if (mask[i]) rows.push_back(i);
  if (rows.empty()) return tape.constant(Tensor::scalar(0.0));

  const std::size_t k = teacher_token_logits.cols();
  std::vector<double> sel;
  sel.reserve(rows.size() * k);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < k; ++c) sel.push_back(teacher_token_logits.at(r, c));
  const Tensor pt = teacher_probs(Tensor({rows.size(), k}, std::move(sel)), center, teacher_temp);
  Var log_ps = nc::log_softmax(nc::gather_rows(student_token_logits, rows), student_temp);
  Var ce = nc::sum(nc::mul(tape.constant(pt), log_ps));
  return nc::scale(ce, -1.0 / static_cast<double>(rows.size()));
}

Var koleo_loss(Var features, double eps) {
  const std::size_t n = features.value().rows();
  if (n < 2) throw data_error("koleo_loss: need at least 2 samples, got " + std::to_string(n));
  Var f = nc::l2_normalize(features);
  const Tensor& fv = f.value();
  const std::size_t d = fv.cols();
  std::vector<std::size_t> nearest(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = fv.at(i, c) - fv.at(j, c);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        nearest[i] = j;
      }
    }
  }
  std::vector<std::size_t> self(n);
  std::iota(self.begin(), self.end(), std::size_t{0});
  Var diff = nc::sub(nc::gather_rows(f, self), nc::gather_rows(f, nearest));
  Var sq = nc::clamp_min(nc::row_sum(nc::mul(diff, diff)), eps * eps);
  // log d = 0.5 * log(d^2)
  return nc::scale(nc::sum(nc::log(sq)), -0.5 / static_cast<double>(n));
}

Tensor update_center(const Tensor& center, const Tensor& teacher_logits, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw data_error("update_center: momentum must be in [0, 1)");
  const std::size_t m = teacher_logits.rows(), k = teacher_logits.cols();
  if (center.size() != k) throw shape_error("update_center: center/logit width mismatch");
  std::vector<double> mean(k, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) mean[c] += teacher_logits.at(r, c);
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = momentum * center[c] + (1.0 - momentum) * (mean[c] / static_cast<double>(m));
  }
  return Tensor(center.shape(), std::move(out));
}

std::vector<bool> sample_token_mask(std::size_t token_count, std::pair<double, double> range, std::uint64_t seed) {
  if (token_count < 1) throw data_error("sample_token_mask: token_count must be >= 1");
  if (range.first > range.second || range.first < 0.0 || range.second > 1.0) {
    throw data_error("sample_token_mask: bad ratio range");
  }
  Rng rng(seed);
  const double ratio = range.first == range.second ? range.first : rng.uniform(range.first, range.second);
  const auto masked =
      std::min(token_count, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(token_count))));
  std::vector<std::size_t> idx(token_count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < masked; ++i) std::swap(idx[i], idx[i + rng.below(token_count - i)]);
  std::vector<bool> mask(token_count, false);
  for (std::size_t i = 0; i < masked; ++i) mask[idx[i]] = true;
  return mask;
}

}  // namespace porc::ssl
