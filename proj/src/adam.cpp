#include "sssd/adam.hpp"

#include <cmath>

namespace sssd {

Adam::Adam(std::vector<ad::Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw DomainError("Adam learning rate must be positive");
  for (auto* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++step_count_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, double(step_count_));
  const double correction2 = 1.0 - std::pow(b2, double(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    if (!p.trainable) continue;
    if (p.grad.shape() != p.value.shape()) {
      if (p.grad.empty()) continue;
      throw DimensionError("Adam: gradient shape " + shape_string(p.grad.shape()) + " does not match parameter '" +
                           p.name + "' " + shape_string(p.value.shape()));
    }
    auto& m = m_[i].array();
    auto& v = v_[i].array();
    const auto& g = p.grad.array();
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    p.value.array() -= options_.learning_rate * (m / correction1) / ((v / correction2).sqrt() + options_.epsilon);
  }
}

}  // namespace sssd
