#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sssd/tensor.hpp"

namespace sssd::ad {

/// Named trainable array. Gradients accumulate into `grad` on Tape::backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient after Tape::backward; an all-zero tensor if nothing reached this node.
  Tensor grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
/// parents always precede children and backward() is a single reverse sweep.
/// Not thread-safe; use one tape per thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  // With gradients disabled, parameters are recorded as constants and no
  // backward closures are kept (inference mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  bool any_requires_grad(std::initializer_list<Var> vars) const {
    for (const Var& v : vars) {
      if (requires_grad(v.id())) return true;
    }
    return false;
  }

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var parameter(Parameter& param);

  // Appends an operation result. `backward` reads grad(self) and accumulates
  // into its parents via grad_ref(). Throws NumericError on non-finite values.
  Var record(const char* op, Tensor value, std::vector<int> parents, Backward backward);

  void backward(Var root);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Lazily zero-initialized gradient buffer.
  Tensor& grad_ref(int id);
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
  // Adds g to the gradient of `id`, adopting the buffer when there is none yet.
  void accumulate_grad(int id, Tensor&& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace sssd::ad
