// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "amodal/tensor.hpp"

namespace amodal {

/// A named trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Backward context handed to each node: output gradient plus per-input slots.
/// `in_grads[i]` is null when input i does not require a gradient.
struct BackwardCtx {
  const Tensor& out_value;
  const Tensor& out_grad;
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
};

using BackwardFn = std::function<void(BackwardCtx&)>;

/// Records operations in creation order, which is a topological order of the
/// graph; backward walks it in reverse, visiting each node once.
/// Gradients accumulate into Parameter::grad across calls until zeroed.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input.
  Var constant(Tensor value);
  /// Tracked leaf bound to a parameter; backward adds into `p.grad`.
  Var leaf(Parameter& p);
  /// Tracked leaf that owns its gradient (retrieve with grad()).
  Var variable(Tensor value);

  /// Appends an op node. `fn` may be empty when no input requires a gradient.
  Var record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn fn);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  /// Gradient of a tracked node after backward (zeros if it received none).
  const Tensor& grad(Var v);
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).op; }

 private:
  struct Node {
    std::string op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

}  // namespace amodal
