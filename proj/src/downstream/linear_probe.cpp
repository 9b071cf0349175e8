// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/linear_probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "porc/error.hpp"
#include "porc/numeric/ops.hpp"
#include "porc/numeric/tape.hpp"

namespace porc::ds {

using nc::Tensor;
using nc::Var;

std::size_t class_count(const std::vector<int>& labels, const char* who) {
  std::set<int> seen;
  for (int y : labels) {
    if (y < 0) throw data_error(std::string(who) + ": negative label " + std::to_string(y));
    seen.insert(y);
  }
  if (seen.size() < 2) throw data_error(std::string(who) + ": need at least two classes, got " + std::to_string(seen.size()));
  return static_cast<std::size_t>(*seen.rbegin()) + 1;
}

namespace {

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor t = Tensor::zeros({labels.size(), classes});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<std::size_t>(labels[i]) >= classes) {
      throw data_error("label " + std::to_string(labels[i]) + " outside " + std::to_string(classes) + " classes");
    }
    d[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

Var cross_entropy(nc::Tape& tape, LinearProbe& p, const Tensor& x, const Tensor& targets) {
  Var X = tape.constant(x);
  Var logits = nc::add(nc::matmul(X, nc::transpose(tape.param(p.weight))), tape.param(p.bias));
  Var ll = nc::mul(nc::log_softmax(logits), tape.constant(targets));
  return nc::scale(nc::sum(ll), -1.0 / static_cast<double>(x.rows()));
}

}  // namespace

Var probe_cross_entropy(nc::Tape& tape, LinearProbe& probe, const Tensor& features, const std::vector<int>& labels) {
  if (features.rows() != labels.size()) throw shape_error("linear probe: feature rows vs labels mismatch");
  return cross_entropy(tape, probe, features, one_hot(labels, probe.classes));
}

LinearProbe train_linear_probe(const Tensor& features, const std::vector<int>& labels, const ProbeConfig& config,
                               std::uint64_t /*seed*/) {
  if (features.rows() != labels.size()) {
    throw shape_error("linear probe: " + std::to_string(features.rows()) + " feature rows vs " +
                      std::to_string(labels.size()) + " labels");
  }
  if (config.max_iters < 1 || config.max_iters > 1000) throw data_error("linear probe: max_iters must be in [1, 1000]");
  const std::size_t C = class_count(labels, "linear probe");
  const std::size_t d = features.cols();
  if (!features.all_finite()) throw numeric_error("linear probe: non-finite features");

  LinearProbe p;
  p.classes = C;
  p.weight = Tensor::zeros({C, d}, true);
  p.bias = Tensor::zeros({1, C}, true);
  const Tensor targets = one_hot(labels, C);

  double prev = INFINITY;
  for (std::int64_t it = 0; it < config.max_iters; ++it) {
    nc::Tape tape;
    p.weight.zero_grad();
    p.bias.zero_grad();
    Var loss = cross_entropy(tape, p, features, targets);
    const double l = loss.value().item();
    if (!std::isfinite(l)) throw numeric_error("linear probe: non-finite loss at iteration " + std::to_string(it));
    p.final_loss = l;
    p.iterations = it;
    if (config.min_improvement > 0 && prev - l < config.min_improvement) break;
    prev = l;
    tape.backward(loss);
    for (Tensor* t : {&p.weight, &p.bias}) {
      auto v = t->mutable_data();
      const auto g = t->grad();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= config.lr * g[i];
    }
    p.iterations = it + 1;
  }
  p.final_loss = probe_loss(p, features, labels);
  p.weight.clear_grad();
  p.bias.clear_grad();
  spdlog::debug("linear probe: {} iterations, loss {:.6g}", p.iterations, p.final_loss);
  return p;
}

double probe_loss(const LinearProbe& probe, const Tensor& features, const std::vector<int>& labels) {
  LinearProbe p = probe;
  nc::Tape tape;
  return cross_entropy(tape, p, features, one_hot(labels, probe.classes)).value().item();
}

Tensor probe_logits(const LinearProbe& probe, const Tensor& x) {
  if (x.cols() != probe.weight.cols()) {
    throw shape_error("linear probe: feature dim " + std::to_string(x.cols()) + " vs model " +
                      std::to_string(probe.weight.cols()));
  }
  const std::size_t n = x.rows(), C = probe.classes, d = x.cols();
  std::vector<double> out(n * C);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      double s = probe.bias[c];
      for (std::size_t k = 0; k < d; ++k) s += x.at(i, k) * probe.weight.at(c, k);
      out[i * C + c] = s;
    }
  return Tensor({n, C}, std::move(out));
}

Tensor probe_proba(const LinearProbe& probe, const Tensor& x) {
  nc::Tape tape;
  return nc::softmax(tape.constant(probe_logits(probe, x))).value();
}

std::vector<int> probe_predict(const LinearProbe& probe, const Tensor& x) {
  const Tensor z = probe_logits(probe, x);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.data().subspan(i * z.cols(), z.cols());
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace porc::ds
