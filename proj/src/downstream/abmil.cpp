// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/abmil.hpp"

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "porc/downstream/linear_probe.hpp"
#include "porc/error.hpp"
#include "porc/numeric/ops.hpp"
#include "porc/numeric/optim.hpp"
#include "porc/util/random.hpp"

namespace porc::ds {

using nc::Tensor;
using nc::Var;

namespace {

Tensor gaussian(nc::Shape shape, double stddev, Rng& rng) {
  std::vector<double> d(nc::shape_size(shape));
  for (auto& v : d) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(d), true);
}

struct Forward {
  Var scores;     // [1, C]
  Var attention;  // [1, n]
};

Forward forward(nc::Tape& tape, Var V, Var w, Var W, Var b, const Bag& bag) {
  Var H = tape.constant(bag.instances);
  Var hidden = nc::tanh(nc::matmul(H, nc::transpose(V)));       // [n, h]
  Var a = nc::softmax(nc::transpose(nc::matmul(hidden, w)));     // [1, n]
  Var z = nc::matmul(a, H);                                      // [1, d]
  return {nc::add(nc::matmul(z, nc::transpose(W)), b), a};
}

}  // namespace

AbmilModel init_abmil(std::size_t dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  if (dim == 0 || hidden == 0 || classes < 2) throw data_error("abmil: dim, hidden must be >= 1 and classes >= 2");
  Rng rng(seed);
  AbmilModel m;
  m.V = gaussian({hidden, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  m.w = gaussian({hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  m.weight = gaussian({classes, dim}, 0.01, rng);
  m.bias = Tensor::zeros({1, classes}, true);
  return m;
}

void validate_bag(const Bag& bag, std::size_t dim) {
  if (bag.instances.size() == 0 || bag.instances.rows() == 0) throw data_error("abmil: empty bag '" + bag.id + "'");
  if (bag.instances.cols() != dim) {
    throw shape_error("abmil: bag '" + bag.id + "' has dim " + std::to_string(bag.instances.cols()) + ", model expects " +
                      std::to_string(dim));
  }
}

AbmilOutput abmil_forward(const AbmilModel& model, const Bag& bag) {
  validate_bag(bag, model.dim());
  nc::Tape tape;
  Forward f = forward(tape, tape.constant(model.V), tape.constant(model.w), tape.constant(model.weight),
                      tape.constant(model.bias), bag);
  AbmilOutput out;
  out.scores.assign(f.scores.value().data().begin(), f.scores.value().data().end());
  out.attention.assign(f.attention.value().data().begin(), f.attention.value().data().end());
  return out;
}

Var abmil_loss(nc::Tape& tape, AbmilModel& model, const Bag& bag) {
  validate_bag(bag, model.dim());
  if (bag.label < 0 || static_cast<std::size_t>(bag.label) >= model.classes()) {
    throw data_error("abmil: bag '" + bag.id + "' label out of range");
  }
  Forward f = forward(tape, tape.param(model.V), tape.param(model.w), tape.param(model.weight),
                      tape.param(model.bias), bag);
  std::vector<double> onehot(model.classes(), 0.0);
  onehot[static_cast<std::size_t>(bag.label)] = 1.0;
  Var ll = nc::mul(nc::log_softmax(f.scores), tape.constant(Tensor::row(std::move(onehot))));
  return nc::scale(nc::sum(ll), -1.0);
}

AbmilModel train_abmil(const std::vector<Bag>& bags, const AbmilConfig& config, std::uint64_t seed) {
  if (bags.empty()) throw data_error("abmil: no bags");
  if (config.epochs < 0 || config.batch < 1) throw data_error("abmil: epochs must be >= 0 and batch >= 1");
  std::vector<int> labels;
  for (const auto& b : bags) labels.push_back(b.label);
  const std::size_t C = class_count(labels, "abmil");
  const std::size_t d = bags.front().instances.cols();
  for (const auto& b : bags) validate_bag(b, d);

  AbmilModel model = init_abmil(d, config.hidden, C, derive_seed(seed, 0));
  nc::AdamW adam;
  Rng order_rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(bags.size());
  const auto params = model.params();
  for (std::int64_t e = 0; e < config.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      for (auto* p : params) p->zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        nc::Tape tape;
        Var loss = nc::scale(abmil_loss(tape, model, bags[order[i]]), 1.0 / static_cast<double>(end - start));
        if (!std::isfinite(loss.value().item())) throw numeric_error("abmil: non-finite loss in epoch " + std::to_string(e));
        tape.backward(loss);
      }
      adam.step(params, config.lr, 0.0);
    }
  }
  for (auto* p : params) p->clear_grad();
  spdlog::debug("abmil: trained {} epochs on {} bags", config.epochs, bags.size());
  return model;
}

std::vector<double> abmil_proba(const AbmilModel& model, const Bag& bag) {
  auto s = abmil_forward(model, bag).scores;
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (auto& v : s) z += (v = std::exp(v - mx));
  for (auto& v : s) v /= z;
  return s;
}

}  // namespace porc::ds
