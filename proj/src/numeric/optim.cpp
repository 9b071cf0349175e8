// SPDX-License-Identifier: Apache-2.0
#include "porc/numeric/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <spdlog/spdlog.h>

#include "porc/error.hpp"

namespace porc::nc {

void AdamW::step(std::span<Tensor* const> params, double lr, double weight_decay) {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) {
    throw data_error("adamw: lr and weight_decay must be non-negative");
  }
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.push_back(Tensor::zeros(p->shape()));
      v_.push_back(Tensor::zeros(p->shape()));
    }
  }
  if (m_.size() != params.size()) throw shape_error("adamw: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != m_[i].shape()) {
      throw shape_error("adamw: parameter " + std::to_string(i) + " shape " + shape_str(params[i]->shape()) +
                        " does not match its moments " + shape_str(m_[i].shape()));
    }
    if (params[i]->has_grad()) {
      for (double g : params[i]->grad()) {
        if (!std::isfinite(g)) throw numeric_error("adamw: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->mutable_data();
    auto m = m_[i].mutable_data();
    auto v = v_[i].mutable_data();
    const auto g = params[i]->grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      p[j] -= lr * weight_decay * p[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) throw data_error("adamw: moment lists differ in length");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_global_norm(std::span<Tensor* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw data_error("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor* p : params)
    for (double g : p->grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor* p : params)
      for (double& g : p->mutable_grad()) g *= s;
  }
  return norm;
}

Schedule Schedule::constant_value(double v) {
  Schedule s;
  s.start = s.peak = s.final = v;
  return s;
}

Schedule Schedule::cosine(double start, double final, std::int64_t total_steps) {
  Schedule s;
  s.kind = Kind::cosine;
  s.start = s.peak = start;
  s.final = final;
  s.total_steps = total_steps;
  return s;
}

Schedule Schedule::warmup_cosine(double start, double peak, double final, std::int64_t warmup_steps,
                                 std::int64_t total_steps) {
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw data_error("schedule: need 0 <= warmup_steps <= total_steps");
  }
  Schedule s;
  s.kind = Kind::warmup_cosine;
  s.start = start;
  s.peak = peak;
  s.final = final;
  s.warmup_steps = warmup_steps;
  s.total_steps = total_steps;
  return s;
}

namespace {

double cosine_segment(double from, double to, std::int64_t t, std::int64_t span) {
  if (span <= 0 || t >= span) return to;
  if (t <= 0) return from;
  const double x = static_cast<double>(t) / static_cast<double>(span);
  return to + 0.5 * (from - to) * (1.0 + std::cos(std::numbers::pi * x));
}

}  // namespace

double schedule_value(const Schedule& s, std::int64_t step) {
  if (s.kind == Schedule::Kind::constant) return s.start;
  if (step < 0 || step > s.total_steps) {
    spdlog::warn("schedule: step {} outside [0, {}], clamped", step, s.total_steps);
    step = step < 0 ? 0 : s.total_steps;
  }
  if (s.kind == Schedule::Kind::cosine) return cosine_segment(s.start, s.final, step, s.total_steps);

  if (step < s.warmup_steps) {
    return s.start + (s.peak - s.start) * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  return cosine_segment(s.peak, s.final, step - s.warmup_steps, s.total_steps - s.warmup_steps);
}

}  // namespace porc::nc
