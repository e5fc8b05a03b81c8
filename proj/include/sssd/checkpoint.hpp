#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sssd/config.hpp"
#include "sssd/dataset.hpp"
#include "sssd/model.hpp"

namespace sssd::model {

// Settings a trained network needs at sampling time besides its weights.
struct CheckpointMeta {
  DiffusionConfig diffusion;
  data::Scaler scaler;
  Index channel_split_width = 0;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  ModelConfig config;
  CheckpointMeta meta;
  std::vector<NamedTensor> tensors;  // declaration order
};

/// Binary layout (little-endian):
///   "SSSDCKP1"
///   config record: i64 residual_layers, residual_channels, skip_channels,
///     embed d1, d2, d3, state_dim, in_channels, length; u8 bidirectional,
///     u8 second_s4; i64 diffusion steps; f64 beta0, beta1; u8 mode, u8 target;
///     i64 channel_split_width; u64 K; f64 mean[K]; f64 std[K]
///   u64 tensor count, then per tensor: u32 name length, name bytes,
///     u32 rank, u64 dims[rank], f64 values
void save_checkpoint(const std::filesystem::path& path, SssdModel& model, const CheckpointMeta& meta);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Builds a model from a checkpoint, verifying names and shapes.
std::unique_ptr<SssdModel> instantiate(const Checkpoint& checkpoint);

}  // namespace sssd::model
