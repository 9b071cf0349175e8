// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "porc/numeric/tape.hpp"
#include "porc/numeric/tensor.hpp"

namespace porc::ds {

struct Bag {
  nc::Tensor instances;  // [n, d]
  int label = 0;
  std::string id;
};

/// Plain attention MIL: a = softmax_k(w^T tanh(V h_k)), z = sum a_k h_k, scores = W z + b.
struct AbmilModel {
  nc::Tensor V;       // [h, d]
  nc::Tensor w;       // [h, 1]
  nc::Tensor weight;  // [C, d]
  nc::Tensor bias;    // [1, C]

  std::size_t dim() const { return V.cols(); }
  std::size_t classes() const { return weight.rows(); }
  std::vector<nc::Tensor*> params() { return {&V, &w, &weight, &bias}; }
};

struct AbmilOutput {
  std::vector<double> scores;     // logits, length C
  std::vector<double> attention;  // length n, sums to 1
};

struct AbmilConfig {
  std::int64_t epochs = 50;
  double lr = 2e-5;
  std::int64_t batch = 1;
  std::size_t hidden = 16;
};

AbmilModel init_abmil(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed);

void validate_bag(const Bag& bag, std::size_t dim);

AbmilOutput abmil_forward(const AbmilModel& model, const Bag& bag);

/// Cross-entropy of one bag recorded on `tape` with the model tensors as leaves.
nc::Var abmil_loss(nc::Tape& tape, AbmilModel& model, const Bag& bag);

/// Adam (no weight decay) on per-bag cross-entropy, bags visited in a seeded order each epoch.
AbmilModel train_abmil(const std::vector<Bag>& bags, const AbmilConfig& config, std::uint64_t seed);

/// Softmax of the bag scores.
std::vector<double> abmil_proba(const AbmilModel& model, const Bag& bag);

}  // namespace porc::ds
