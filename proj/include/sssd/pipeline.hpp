#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sssd/checkpoint.hpp"
#include "sssd/config.hpp"
#include "sssd/dataset.hpp"
#include "sssd/diffusion.hpp"
#include "sssd/metrics.hpp"

namespace sssd::pipeline {

/// Standardized data packed into model rows: each sample contributes one row
/// per channel group, narrower final groups padded with absent channels.
struct ModelRows {
  Tensor values;    // (n * groups, W, L)
  Tensor observed;  // (n * groups, W, L)
  Index groups = 1;
  Index width = 0;
};

ModelRows pack_rows(const Tensor& values, const Tensor& observed, Index split_width);
// Inverse of pack_rows for a (n * groups, W, L) tensor.
Tensor unpack_rows(const Tensor& rows, Index groups, Index channels);
// Splits a (n, K, L) mask the same way as pack_rows (padding with ones).
Tensor pack_mask(const Tensor& mask, Index split_width);

struct TrainResult {
  std::unique_ptr<model::SssdModel> model;
  model::CheckpointMeta meta;
  std::vector<double> losses;
  std::vector<double> wall_seconds;
};

using ProgressFn = std::function<void(long iteration, double loss)>;

// Trains on the dataset's train split. Throws NumericError on a NaN loss.
TrainResult train(const RunConfig& config, const data::Dataset& dataset, const ProgressFn& progress = {});

void write_training_outputs(const std::filesystem::path& dir, TrainResult& result, const RunConfig& config);

// Mean loss over the validation split with masks, steps and noise drawn from
// fixed streams of `seed`; `repeats` passes over the split.
double validation_loss(model::SssdModel& model, const model::CheckpointMeta& meta, const RunConfig& config,
                       const data::Dataset& dataset, std::uint64_t seed, int repeats = 4);

struct ImputeResult {
  Tensor truth;     // (n, K, L) raw units
  Tensor m_imp;     // (n, K, L)
  Tensor m_mvi;     // (n, K, L)
  std::vector<Index> sample_ids;
  std::vector<Tensor> draws;  // S tensors (n, K, L), raw units
  diffusion::SampleSummary summary;
  metrics::EvalReport mean_report;      // on the per-entry mean of the draws
  metrics::EvalReport per_draw_report;  // metrics averaged over draws
};

/// S reverse-diffusion draws per sample of `split`. Conditioned entries of each
/// draw equal the raw ground truth. One mask per sample, fixed by `seed`.
ImputeResult impute(model::SssdModel& model, const model::CheckpointMeta& meta, const data::Dataset& dataset,
                    const masking::ScenarioSpec& scenario, const SamplingConfig& sampling, std::uint64_t seed,
                    data::Split split = data::Split::Test);

// samples.bin, report.json, quantiles.csv, truth.bin, imputed.bin, mask_imp.bin.
void write_impute_outputs(const std::filesystem::path& dir, const ImputeResult& result);

// Per-draw sample file: "SSSDSMP1", u64 S, n, K, L, then f64 values.
void save_samples(const std::filesystem::path& path, const std::vector<Tensor>& draws);
std::vector<Tensor> load_samples(const std::filesystem::path& path);

std::string quantile_column(double level);

// Keeps large temporaries on the heap instead of fresh mmap'd pages. No-op off glibc.
void tune_allocator();

}  // namespace sssd::pipeline
