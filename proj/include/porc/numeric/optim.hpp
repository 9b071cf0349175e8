// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "porc/numeric/tensor.hpp"

namespace porc::nc {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
///
/// Moment buffers are created on the first step and bound by position to the
/// parameter list, so every later call must pass the same parameters in the
/// same order.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(std::span<Tensor* const> params, double lr, double weight_decay);

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

/// Scales every gradient by max_norm / g when the global l2 norm g exceeds
/// max_norm. Returns g measured before clipping.
double clip_global_norm(std::span<Tensor* const> params, double max_norm);

struct Schedule {
  enum class Kind { constant, cosine, warmup_cosine };

  Kind kind = Kind::constant;
  double start = 0.0;
  double peak = 0.0;   // warmup_cosine only
  double final = 0.0;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 0;

  static Schedule constant_value(double v);
  static Schedule cosine(double start, double final, std::int64_t total_steps);
  static Schedule warmup_cosine(double start, double peak, double final, std::int64_t warmup_steps,
                                std::int64_t total_steps);
};

/// Out-of-range steps are clamped to [0, total_steps] with a warning.
double schedule_value(const Schedule& s, std::int64_t step);

}  // namespace porc::nc
