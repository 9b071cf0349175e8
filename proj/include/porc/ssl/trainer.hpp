// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "porc/numeric/optim.hpp"
#include "porc/slide/crops.hpp"
#include "porc/ssl/encoder.hpp"

namespace porc::ssl {

/// Pretraining hyperparameters. Defaults reproduce the published table;
/// desk() shrinks sizes and step counts so runs finish on a laptop.
struct SslHyper {
  EncoderConfig encoder;
  HeadConfig head;
  slide::CropConfig crops;

  std::pair<double, double> mask_ratio{0.1, 0.5};

  std::int64_t epochs = 20;
  std::int64_t warmup_epochs = 2;
  std::int64_t freeze_last_layer_epochs = 1;
  std::int64_t warmup_teacher_temp_epochs = 6;
  std::int64_t steps_per_epoch = 100;
  std::int64_t batch_size = 3072;

  double lr_start = 0.0;
  double lr_peak = 2e-3;
  double lr_final = 1e-6;
  double teacher_temp_start = 0.04;
  double teacher_temp_final = 0.4;
  double student_temp = 0.1;
  double momentum_start = 0.992;
  double momentum_final = 1.0;
  double weight_decay_start = 0.04;
  double weight_decay_final = 0.4;
  double clip_norm = 3.0;
  nc::AdamWConfig adamw;

  double lambda_dino = 1.0;
  double lambda_ibot = 1.0;
  double lambda_koleo = 0.1;

  bool centering = true;
  double center_momentum = 0.9;

  std::uint64_t seed = 0;

  static SslHyper desk();

  std::int64_t total_steps() const { return epochs * steps_per_epoch; }
  nc::Schedule lr_schedule() const;
  nc::Schedule teacher_temp_schedule() const;
  nc::Schedule momentum_schedule() const;
  nc::Schedule weight_decay_schedule() const;

  /// Throws data_error on an inconsistent configuration.
  void validate() const;
};

nlohmann::json to_json(const SslHyper& h);
SslHyper hyper_from_json(const nlohmann::json& j);
/// Applies a dotted-key override such as "crops.global_size=32". Unknown keys are rejected.
void apply_override(SslHyper& h, const std::string& key, const std::string& value);

struct ScheduledValues {
  double lr = 0.0;
  double teacher_temp = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Teacher temperature holds its final value after its warmup span.
ScheduledValues scheduled_values(const SslHyper& h, std::int64_t step);

struct SslState {
  ParamSet student;
  ParamSet teacher;
  nc::Tensor dino_center;
  nc::Tensor ibot_center;
  nc::AdamW optimizer;
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  static SslState init(const SslHyper& h);
  std::vector<nc::Tensor*> student_params();
};

struct StepMetrics {
  std::int64_t step = 0;
  double total_loss = 0.0;
  double dino_loss = 0.0;
  double ibot_loss = 0.0;
  double koleo_loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double teacher_temp = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double teacher_entropy = 0.0;
};

/// teacher <- m * teacher + (1 - m) * student for every parameter.
void ema_update(ParamSet& teacher, const ParamSet& student, double momentum);

/// One optimisation step: student forward on all views (global views
/// masked), teacher forward on unmasked global views, weighted
/// DINO + iBOT + KoLeo loss, clipped AdamW on the student, prototype
/// gradients zeroed during the freeze window, then EMA and centre updates.
StepMetrics train_step(SslState& state, const std::vector<slide::CropSet>& batch, const SslHyper& hyper,
                       std::int64_t step);

/// Runs `steps` steps drawing batches from `patches` with crops seeded from hyper.seed.
std::vector<StepMetrics> pretrain(SslState& state, const std::vector<slide::RgbImage>& patches, const SslHyper& hyper,
                                  std::int64_t steps, std::int64_t batch_size);

/// Teacher global features, one unit-norm row per patch, in input order.
nc::Tensor extract_features(const SslState& state, const SslHyper& hyper,
                            const std::vector<slide::RgbImage>& patches);

}  // namespace porc::ssl
