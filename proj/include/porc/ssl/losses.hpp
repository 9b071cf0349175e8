// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "porc/numeric/ops.hpp"
#include "porc/numeric/tensor.hpp"

namespace porc::ssl {

/// Teacher targets softmax((logits - center) / tau_t), row-wise. Pure values, no gradient.
nc::Tensor teacher_probs(const nc::Tensor& teacher_logits, const nc::Tensor& center, double teacher_temp);

/// Row-wise entropy (nats) averaged over rows.
double mean_entropy(const nc::Tensor& probs);

struct DinoPairing {
  /// Teacher row i and student row i are the same view; such pairs are skipped.
  bool skip_same_view = true;
};

/// Cross-entropy between centered/sharpened teacher rows [Vt, K] and student
/// rows [Vs, K], averaged over the (teacher, student) view pairs.
nc::Var dino_loss(const nc::Tensor& teacher_logits, nc::Var student_logits, const nc::Tensor& center,
                  double teacher_temp, double student_temp, DinoPairing pairing = {});

/// Cross-entropy on masked token positions, averaged over those positions.
/// Returns a zero constant when nothing is masked.
nc::Var ibot_loss(const nc::Tensor& teacher_token_logits, nc::Var student_token_logits, const std::vector<bool>& mask,
                  const nc::Tensor& center, double teacher_temp, double student_temp);

inline constexpr double kKoleoEps = 1e-8;

/// -(1/n) sum_i log(max(min_{j!=i} ||f_i - f_j||, eps)) over l2-normalized rows.
nc::Var koleo_loss(nc::Var features, double eps = kKoleoEps);

/// center <- m * center + (1 - m) * mean of batch rows.
nc::Tensor update_center(const nc::Tensor& center, const nc::Tensor& teacher_logits, double momentum);

/// Masked count = round(ratio * token_count), ratio ~ U[lo, hi]; positions uniform.
std::vector<bool> sample_token_mask(std::size_t token_count, std::pair<double, double> ratio_range, std::uint64_t seed);

}  // namespace porc::ssl
