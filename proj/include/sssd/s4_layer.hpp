#pragma once

#include <string>
#include <vector>

#include "sssd/autodiff.hpp"
#include "sssd/rng.hpp"
#include "sssd/s4.hpp"

namespace sssd::s4 {

/// Differentiable per-head kernel materialization.
///
/// Head h uses the shared frozen (A, B), its own step exp(log_delta[h]) and
/// output row c[h]. Returns kernels of shape (H, length). Gradients flow to
/// `c` and `log_delta` through the adjoint of the state propagation.
ad::Var ssm_kernel(ad::Var c, ad::Var log_delta, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   Index length);

struct S4LayerConfig {
  Index channels = 0;
  Index state_dim = 64;
  bool bidirectional = true;
  double delta_min = 1e-3;
  double delta_max = 1e-1;
};

/// H independent single-input single-output SSM heads with pre-normalization.
///
/// forward: layer norm across channels, causal SSM convolution per head; when
/// bidirectional, a second set of heads runs on the time-reversed sequence and
/// both maps are concatenated and projected 2H -> H. Shape (B, H, L) in and out.
class S4Layer {
 public:
  S4Layer(const std::string& prefix, const S4LayerConfig& config, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  void collect(std::vector<ad::Parameter*>& out);

  const S4LayerConfig& config() const { return config_; }
  const Eigen::MatrixXd& state_matrix() const { return a_; }
  const Eigen::VectorXd& input_matrix() const { return b_; }

 private:
  struct Direction {
    ad::Parameter c;          // (H, N)
    ad::Parameter log_delta;  // (H)
    ad::Parameter d;          // (H)
  };

  void init_direction(Direction& dir, const std::string& prefix, Rng& rng);
  ad::Var run_direction(ad::Tape& tape, Direction& dir, ad::Var z, bool reversed = false);

  S4LayerConfig config_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  ad::Parameter norm_gain_;
  ad::Parameter norm_bias_;
  Direction forward_;
  Direction backward_;
  ad::Parameter proj_weight_;
  ad::Parameter proj_bias_;
};

}  // namespace sssd::s4
