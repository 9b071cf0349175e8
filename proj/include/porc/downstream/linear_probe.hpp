// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "porc/numeric/tape.hpp"
#include "porc/numeric/tensor.hpp"

namespace porc::ds {

struct LinearProbe {
  nc::Tensor weight;  // [C, d]
  nc::Tensor bias;    // [1, C]
  std::size_t classes = 0;
  std::int64_t iterations = 0;
  double final_loss = 0.0;
};

struct ProbeConfig {
  std::int64_t max_iters = 1000;
  double lr = 0.1;
  double min_improvement = 1e-9;  // early stop; <= 0 disables
};

/// Multinomial logistic regression by full-batch gradient descent from zero init.
LinearProbe train_linear_probe(const nc::Tensor& features, const std::vector<int>& labels,
                               const ProbeConfig& config = {}, std::uint64_t seed = 0);

/// Mean cross-entropy of the probe; exposed for gradient checks.
// Mean multinomial cross-entropy on the tape; weight and bias bound as params.
nc::Var probe_cross_entropy(nc::Tape& tape, LinearProbe& probe, const nc::Tensor& features,
                            const std::vector<int>& labels);
double probe_loss(const LinearProbe& probe, const nc::Tensor& features, const std::vector<int>& labels);

nc::Tensor probe_logits(const LinearProbe& probe, const nc::Tensor& features);
nc::Tensor probe_proba(const LinearProbe& probe, const nc::Tensor& features);
std::vector<int> probe_predict(const LinearProbe& probe, const nc::Tensor& features);

/// Number of classes implied by labels (max + 1); rejects negatives and fewer than two distinct classes.
std::size_t class_count(const std::vector<int>& labels, const char* who);

}  // namespace porc::ds
