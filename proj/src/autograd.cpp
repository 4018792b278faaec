// SPDX-License-Identifier: Apache-2.0
#include "amodal/autograd.hpp"

#include "amodal/error.hpp"

namespace amodal {

const Tensor& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Parameter& p) {
  Node node;
  node.op = "leaf";
  node.value = p.value;
  node.requires_grad = true;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Tensor value) {
  Node node;
  node.op = "variable";
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  check_finite(node.value, node.op);
  for (const Var& in : inputs) {
    require(in.tape == this, ErrorKind::kUsage, std::string(op) + ": input from a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
  }
  if (node.requires_grad) {
    require(static_cast<bool>(fn), ErrorKind::kUsage, std::string(op) + ": tracked op without backward");
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  require(n.requires_grad, ErrorKind::kUsage, "grad() of untracked value");
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  require(loss.tape == this, ErrorKind::kUsage, "backward: loss from a different tape");
  Node& root = nodes_.at(static_cast<std::size_t>(loss.id));
  require(root.value.size() == 1, ErrorKind::kShape, "backward on non-scalar " + root.value.shape().str());
  require(root.requires_grad, ErrorKind::kUsage, "backward through untracked value (op " + root.op + ")");

  for (auto& n : nodes_) n.grad = Tensor();
  root.grad = Tensor(root.value.shape(), 1.0);

  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.param != nullptr) {
      auto& acc = node.param->grad;
      if (acc.shape() != node.param->value.shape()) acc = Tensor(node.param->value.shape());
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += node.grad[i];
      continue;
    }
    if (!node.backward) continue;
    BackwardCtx ctx{node.value, node.grad, {}, {}};
    for (int in : node.inputs) {
      Node& src = nodes_[static_cast<std::size_t>(in)];
      ctx.in_values.push_back(&src.value);
      if (src.requires_grad) {
        if (src.grad.empty()) src.grad = Tensor(src.value.shape());
        ctx.in_grads.push_back(&src.grad);
      } else {
        ctx.in_grads.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }
}

}  // namespace amodal
