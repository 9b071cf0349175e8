// SPDX-License-Identifier: Apache-2.0
#include "porc/numeric/tape.hpp"

#include <algorithm>

#include "porc/error.hpp"

namespace porc::nc {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::param(Tensor& t) {
  Node n;
  n.value = Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  n.leaf = &t;
  n.needs_grad = t.requires_grad();
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor t) {
  Node n;
  t.set_requires_grad(false);
  t.clear_grad();
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

std::span<double> Tape::grad_for(std::size_t id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw data_error("backward: root belongs to another tape");
  if (nodes_.empty()) throw data_error("backward: empty tape");
  if (nodes_[root.id].value.size() != 1) {
    throw shape_error("backward: root must be scalar, got " + shape_str(nodes_[root.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[root.id].needs_grad) return;
  grad_for(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.leaf != nullptr) {
      n.leaf->accumulate_grad(n.grad);
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

}  // namespace porc::nc
