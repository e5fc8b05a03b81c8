#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sssd/autodiff.hpp"
#include "sssd/diffusion.hpp"
#include "sssd/rng.hpp"
#include "sssd/s4_layer.hpp"

namespace sssd::model {

struct ModelConfig {
  Index residual_layers = 4;
  Index residual_channels = 64;
  Index skip_channels = 64;
  std::array<Index, 3> embed_dims{64, 128, 128};
  Index state_dim = 16;
  bool bidirectional = true;
  bool second_s4 = true;
  Index in_channels = 4;
  Index length = 128;

  void validate() const;

  // 36 blocks x 256 channels, embedding (128, 512, 512), N = 64, two S4 layers.
  static ModelConfig reference(Index in_channels, Index length);
  // Desk scale: same structure, small sizes.
  static ModelConfig desk(Index in_channels, Index length);
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

// Sinusoidal step encoding of width `dim`: sin(t f_j) then cos(t f_j) with
// f_j = 10000^(-j / (dim/2 - 1)).
Tensor sinusoidal_encoding(std::span<const int> steps, Index dim);

struct PointwiseLinear {
  ad::Parameter weight;  // (out, in)
  ad::Parameter bias;    // (out)
};

/// One residual block: embedding add, S4, channel doubling, conditioning add,
/// optional second S4, gated tanh, and a projection split into residual and
/// skip outputs.
class ResidualBlock {
 public:
  ResidualBlock(const std::string& prefix, const ModelConfig& config, Rng& rng);

  struct Output {
    ad::Var hidden;
    ad::Var skip;
  };
  Output forward(ad::Tape& tape, ad::Var h, ad::Var embedding, ad::Var cond);
  void collect(std::vector<ad::Parameter*>& out);

  // Exposed for gradient checks.
  PointwiseLinear& cond_projection() { return cond_; }

 private:
  Index channels_;
  Index skip_channels_;
  PointwiseLinear embed_;
  s4::S4Layer s4_a_;
  PointwiseLinear expand_;
  PointwiseLinear cond_;
  std::unique_ptr<s4::S4Layer> s4_b_;
  PointwiseLinear out_;
};

/// The noise-prediction network eps_theta(x_t, t, c).
class SssdModel {
 public:
  SssdModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // x_t (B, K, L), one step per row, c (B, 2K, L) -> (B, K, L).
  ad::Var forward(ad::Tape& tape, const Tensor& x_t, std::span<const int> steps, const Tensor& cond);

  diffusion::Denoiser denoiser();

  // All parameters in declaration order (the checkpoint order).
  std::vector<ad::Parameter*> parameters();
  Index parameter_count();

  ResidualBlock& block(std::size_t i) { return *blocks_[i]; }

 private:
  ModelConfig config_;
  PointwiseLinear input_;
  PointwiseLinear embed1_;
  PointwiseLinear embed2_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  PointwiseLinear skip_out_;
  PointwiseLinear final_;
};

// Parameter count from the architecture alone (independent of any instance).
Index count_parameters(const ModelConfig& config);

}  // namespace sssd::model
