#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sssd/tensor.hpp"

namespace sssd::data {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

/// n samples of K channels by L steps, with a presence mask (m_mvi) and a
/// train/val/test tag per sample.
struct Dataset {
  Tensor values;    // (n, K, L)
  Tensor observed;  // (n, K, L), 1 = value present
  std::vector<Split> split;

  Index samples() const { return values.dim(0); }
  Index channels() const { return values.dim(1); }
  Index length() const { return values.dim(2); }

  std::vector<Index> indices(Split which) const;
  void validate() const;
};

// Gathers samples (n', K, L) from a (n, K, L) tensor.
Tensor gather(const Tensor& t, const std::vector<Index>& rows);

// Contiguous split: first `train` fraction, then `val`, remainder test.
void assign_splits(Dataset& d, double train = 0.8, double val = 0.1);

enum class SynthKind { Sines, Damped, SquareMix };
SynthKind parse_synth_kind(const std::string& text);
std::string to_string(SynthKind kind);

/// Channels are amplitude/phase transforms of latent oscillators shared by all
/// channels of a sample: channel k carries a fixed amplitude and a phase
/// offset in [0, pi/4].
Dataset synth_dataset(SynthKind kind, Index n, Index channels, Index length, double noise_sd, std::uint64_t seed);

/// Per-channel standardization fitted on the observed entries of the train split.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Scaler fit(const Dataset& d);
  Tensor apply(const Tensor& x) const;    // (..., K, L)
  Tensor inverse(const Tensor& x) const;  // (..., K, L)
};

void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);
// Long-format CSV: sample,channel,t,value[,observed]. Unlisted entries are missing.
Dataset load_csv(const std::filesystem::path& path);

/// Consecutive channel groups of width W (the last may be narrower).
struct ChannelSplit {
  std::vector<Tensor> groups;                    // each (B, W_g, L)
  std::vector<std::pair<Index, Index>> ranges;   // [begin, end) per group
};

ChannelSplit channel_split(const Tensor& batch, Index width);
Tensor reassemble(const ChannelSplit& split);

}  // namespace sssd::data
