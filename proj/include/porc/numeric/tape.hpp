// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "porc/numeric/tensor.hpp"

namespace porc::nc {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Ordered record of executed operations.
///
/// Nodes are appended as ops run, so inputs always precede outputs and a
/// single reverse sweep visits every node once. Leaves created with param()
/// are bound to an external Tensor; backward() adds into that tensor's
/// gradient slot, so repeated backward calls accumulate.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf bound to `t`. Gradients flow into t.grad() when t.requires_grad().
  Var param(Tensor& t);
  /// Leaf holding a copy of `t`; never receives gradient.
  Var constant(Tensor t);

  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Op-implementation surface.
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t input(std::size_t self, std::size_t k) const { return nodes_[self].inputs[k]; }
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of an input, allocated on first use.
  std::span<double> grad_for(std::size_t id);
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* leaf = nullptr;
    bool needs_grad = false;
    std::vector<double> grad;
  };
  std::vector<Node> nodes_;
};

}  // namespace porc::nc
