#include "sssd/autodiff.hpp"

#include <iostream>
#include <stdexcept>

namespace sssd {

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

namespace ad {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad_ref(id_);
  return Tensor::zeros_like(value());
}

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& param) {
  Node node;
  node.op = "parameter";
  node.value = param.value;
  node.requires_grad = grad_enabled_ && param.trainable;
  node.param = node.requires_grad ? &param : nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<int> parents, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by '") + op + "'");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (int p : parents) node.requires_grad = node.requires_grad || requires_grad(p);
  if (node.requires_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad_ref(int id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.empty()) node.grad = Tensor::zeros_like(node.value);
  return node.grad;
}

void Tape::accumulate_grad(int id, Tensor&& g) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (g.shape() != node.value.shape()) {
    throw std::logic_error(std::string("accumulate_grad: gradient shape mismatch at '") + node.op + "'");
  }
  if (node.grad.empty()) {
    node.grad = std::move(g);
  } else {
    node.grad.array() += g.array();
  }
}

void Tape::backward(Var root) {
  if (root.id() < 0 || &root.tape() != this) throw std::logic_error("backward: root is not on this tape");
  if (value(root.id()).size() != 1) {
    throw std::logic_error("backward: root must be a scalar, got shape " +
                           shape_string(value(root.id()).shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  grad_ref(root.id())[0] = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param) {
      if (node.param->grad.shape() != node.value.shape()) node.param->zero_grad();
      node.param->grad.array() += node.grad.array();
    }
  }
}

}  // namespace ad
}  // namespace sssd
