#pragma once

#include <complex>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sssd/autodiff.hpp"
#include "sssd/model.hpp"
#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"

namespace testing {

using sssd::Index;
using sssd::Shape;
using sssd::Tensor;

// O(n^2) DFT of a real sequence, bins 0..n/2.
std::vector<std::complex<double>> naive_rdft(const std::vector<double>& x);

// Direct-sum causal convolution plus feedthrough.
std::vector<double> naive_causal_conv(const std::vector<double>& k, const std::vector<double>& u, double d);

Tensor random_tensor(const Shape& shape, sssd::Rng& rng, double scale = 1.0);
Tensor random_mask(const Shape& shape, sssd::Rng& rng, double p_one);

// Largest entrywise |a - b| / max(|a|, |b|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Builds a scalar on a fresh tape from leaves holding `inputs`.
using ScalarFn = std::function<sssd::ad::Var(sssd::ad::Tape&, const std::vector<sssd::ad::Var>&)>;

struct GradientComparison {
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
};

// Reverse-mode gradients of f against central differences with step h.
GradientComparison compare_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

// Central-difference gradient of a scalar function of the parameter values.
Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h);

// Small config with every structural feature switched on.
sssd::model::ModelConfig tiny_config(Index in_channels = 2, Index length = 16);

// Fills every parameter (including zero-initialized ones) with small noise so
// that all gradient paths are active.
void perturb_parameters(sssd::model::SssdModel& model, std::uint64_t seed, double scale = 0.2);

// Imputation baselines. `cond` is the conditioning mask (1 = known).
// Per-sample, per-channel median of the known entries.
Tensor median_impute(const Tensor& x, const Tensor& cond);
// Last known value carried forward (backward from the first known value at the start).
Tensor hold_last_impute(const Tensor& x, const Tensor& cond);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

}  // namespace testing
