#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sssd/diffusion.hpp"
#include "sssd/masking.hpp"
#include "sssd/model.hpp"

namespace sssd {

struct DiffusionConfig {
  int steps = 50;
  double beta0 = 1e-4;
  double beta1 = 0.02;
  diffusion::Mode mode = diffusion::Mode::D1;
  diffusion::Target target = diffusion::Target::Epsilon;
};

struct TrainingConfig {
  long iterations = 2000;
  Index batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct SamplingConfig {
  Index samples = 10;
  std::vector<double> quantiles{0.05, 0.25, 0.5, 0.75, 0.95};
  Index batch_rows = 64;
};

// Architecture knobs; in_channels and length come from the data.
struct ModelSettings {
  Index residual_layers = 4;
  Index residual_channels = 64;
  Index skip_channels = 64;
  std::array<Index, 3> embed_dims{64, 128, 128};
  Index state_dim = 16;
  bool bidirectional = true;
  bool second_s4 = true;

  model::ModelConfig resolve(Index in_channels, Index length) const;
};

/// Everything that determines a run. JSON schema (all keys optional):
///   {"train_scenario": {"kind": "RM|RBM|BM|TF", "ratio": 0.2, "horizon": 0},
///    "eval_scenario":  {...same...},
///    "diffusion": {"steps", "beta0", "beta1", "mode": "D0|D1", "target": "epsilon|x0"},
///    "model": {"residual_layers", "residual_channels", "skip_channels", "embed_dims": [d1,d2,d3],
///              "state_dim", "bidirectional", "second_s4"},
///    "training": {"iterations", "batch_size", "learning_rate", "seed"},
///    "sampling": {"samples", "quantiles": [...], "batch_rows"},
///    "channel_split_width": 0}
struct RunConfig {
  masking::ScenarioSpec train_scenario{masking::Scenario::RM, 0.2, 0};
  masking::ScenarioSpec eval_scenario{masking::Scenario::RM, 0.2, 0};
  DiffusionConfig diffusion;
  ModelSettings model;
  TrainingConfig training;
  SamplingConfig sampling;
  Index channel_split_width = 0;  // 0 = no splitting

  void validate(Index length) const;
  std::string to_json(int indent = 2) const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace sssd
