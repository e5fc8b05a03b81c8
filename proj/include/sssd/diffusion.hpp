#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sssd/autodiff.hpp"
#include "sssd/rng.hpp"

namespace sssd::diffusion {

// D0 diffuses the full signal; D1 diffuses only the imputation targets and
// re-imposes the conditioning values during sampling.
enum class Mode { D0, D1 };
// What the network output is trained to match.
enum class Target { Epsilon, X0 };

std::string to_string(Mode mode);
std::string to_string(Target target);
Mode parse_mode(const std::string& text);
Target parse_target(const std::string& text);

/// Precomputed noise-schedule vectors, indexed by diffusion step t in [0, T).
struct Schedule {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;      // 1 - beta
  Eigen::VectorXd alpha_bar;  // cumulative product of alpha
  Eigen::VectorXd sigma2;     // posterior variance; sigma2[0] = beta[0]

  int steps() const { return static_cast<int>(beta.size()); }

  // Builds every derived vector from an explicit beta sequence (any T >= 1).
  static Schedule from_betas(const Eigen::VectorXd& betas);
};

// Linear schedule beta = linspace(beta0, beta1, T). Requires T >= 2, 0 < beta0 <= beta1 < 1.
Schedule make_schedule(int steps, double beta0, double beta1);

// sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& schedule);

/// Conditioning inputs for a batch (B, K, L): the masked signal and the
/// combined mask, concatenated along channels into (B, 2K, L) for the network.
struct ConditioningBundle {
  Tensor cond;  // x0 * mask
  Tensor mask;  // m_imp * m_mvi

  Tensor concatenated() const;
};

ConditioningBundle make_conditioning(const Tensor& x0, const Tensor& m_imp, const Tensor& m_mvi);

// eps_theta(x_t, t, c): x_t (B, K, L), one step per batch row, c (B, 2K, L) -> (B, K, L).
using Denoiser = std::function<ad::Var(ad::Tape&, const Tensor& x_t, std::span<const int> steps, const Tensor& c)>;

struct Batch {
  Tensor x0;     // (B, K, L)
  Tensor m_imp;  // (B, K, L)
  Tensor m_mvi;  // (B, K, L)
};

struct LossOptions {
  Mode mode = Mode::D1;
  Target target = Target::Epsilon;
};

// Entries that contribute to the loss: imputation targets with ground truth
// (m_mvi - M) in D1, every present entry (m_mvi) in D0.
Tensor loss_weight(const Batch& batch, Mode mode);

/// Deterministic core of a training step with given steps and noise; records
/// the forward pass on `tape` and returns the scalar loss variable.
ad::Var training_loss(ad::Tape& tape, const Denoiser& net, const Batch& batch, std::span<const int> steps,
                      const Tensor& noise, const Schedule& schedule, const LossOptions& options);

/// One training step: draws a diffusion step per batch row and Gaussian noise
/// from `rng`, evaluates the loss and back-propagates into the network
/// parameters. Returns the loss value.
double training_step(const Denoiser& net, const Batch& batch, const Schedule& schedule, const LossOptions& options,
                     Rng& rng);

// Called after the conditioning has been imposed at step t, and once more with
// t = -1 on the final output.
using SampleObserver = std::function<void(int t, const Tensor& x)>;

/// Reverse process from t = T-1 down to 0. Row b draws all of its noise from
/// rngs[b], so results do not depend on how rows are batched together.
Tensor reverse_sample(const Denoiser& net, const ConditioningBundle& bundle, const Schedule& schedule,
                      const LossOptions& options, std::span<Rng> rngs, const SampleObserver& observer = {});

struct SampleSummary {
  std::vector<double> levels;
  std::vector<Tensor> quantiles;  // one tensor per level, shaped like a sample
  Tensor mean;
};

// Per-entry empirical quantiles (linear interpolation between order
// statistics) and mean over S samples of identical shape.
SampleSummary summarize_samples(std::span<const Tensor> samples, std::span<const double> levels);

}  // namespace sssd::diffusion
