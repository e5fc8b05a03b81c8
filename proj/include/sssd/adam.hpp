#pragma once

#include <vector>

#include "sssd/autodiff.hpp"

namespace sssd {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameters. Moments are
/// zero-initialized on construction.
class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamOptions options = {});

  // Applies one update from each parameter's accumulated grad.
  void step();
  void zero_grad();

  long step_count() const { return step_count_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long step_count_ = 0;
};

}  // namespace sssd
