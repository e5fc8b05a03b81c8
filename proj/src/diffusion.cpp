#include "sssd/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "sssd/ops.hpp"

namespace sssd::diffusion {

std::string to_string(Mode mode) { return mode == Mode::D0 ? "D0" : "D1"; }
std::string to_string(Target target) { return target == Target::Epsilon ? "epsilon" : "x0"; }

Mode parse_mode(const std::string& text) {
  if (text == "D0" || text == "d0") return Mode::D0;
  if (text == "D1" || text == "d1") return Mode::D1;
  throw ConfigError("unknown diffusion mode '" + text + "' (expected D0 or D1)");
}

Target parse_target(const std::string& text) {
  if (text == "epsilon" || text == "eps") return Target::Epsilon;
  if (text == "x0") return Target::X0;
  throw ConfigError("unknown prediction target '" + text + "' (expected epsilon or x0)");
}

Schedule Schedule::from_betas(const Eigen::VectorXd& betas) {
  const Index steps = betas.size();
  if (steps < 1) throw DomainError("schedule needs at least one step");
  if (!((betas.array() > 0.0).all() && (betas.array() < 1.0).all())) {
    throw DomainError("schedule betas must lie in (0, 1)");
  }
  Schedule s;
  s.beta = betas;
  s.alpha = (1.0 - betas.array()).matrix();
  s.alpha_bar.resize(steps);
  s.sigma2.resize(steps);
  double product = 1.0;
  for (Index t = 0; t < steps; ++t) {
    product *= s.alpha[t];
    s.alpha_bar[t] = product;
  }
  s.sigma2[0] = s.beta[0];
  for (Index t = 1; t < steps; ++t) {
    s.sigma2[t] = s.beta[t] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
  }
  return s;
}

Schedule make_schedule(int steps, double beta0, double beta1) {
  if (steps < 2) throw DomainError("make_schedule: T must be >= 2");
  if (!(beta0 > 0.0 && beta0 <= beta1 && beta1 < 1.0)) {
    throw DomainError("make_schedule: require 0 < beta0 <= beta1 < 1");
  }
  Eigen::VectorXd betas(steps);
  for (int t = 0; t < steps; ++t) betas[t] = beta0 + (beta1 - beta0) * double(t) / double(steps - 1);
  betas[steps - 1] = beta1;
  return Schedule::from_betas(betas);
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& schedule) {
  if (t < 0 || t >= schedule.steps()) {
    throw DomainError("q_sample: step " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps()) + ")");
  }
  require_same_shape(x0.shape(), eps.shape(), "q_sample");
  const double ab = schedule.alpha_bar[t];
  return Tensor(x0.shape(), (std::sqrt(ab) * x0.array() + std::sqrt(1.0 - ab) * eps.array()).eval());
}

Tensor ConditioningBundle::concatenated() const {
  const Index batch = cond.dim(0), channels = cond.dim(1), length = cond.dim(2);
  Tensor c({batch, 2 * channels, length});
  for (Index b = 0; b < batch; ++b) {
    c.slice(b).topRows(channels) = cond.slice(b);
    c.slice(b).bottomRows(channels) = mask.slice(b);
  }
  return c;
}

ConditioningBundle make_conditioning(const Tensor& x0, const Tensor& m_imp, const Tensor& m_mvi) {
  require_same_shape(x0.shape(), m_imp.shape(), "make_conditioning");
  require_same_shape(x0.shape(), m_mvi.shape(), "make_conditioning");
  if (x0.rank() != 3) throw DimensionError("make_conditioning: expected (B, K, L) tensors");
  ConditioningBundle bundle;
  bundle.mask = Tensor(x0.shape(), (m_imp.array() * m_mvi.array()).eval());
  bundle.cond = Tensor(x0.shape(), (bundle.mask.array() > 0.5).select(x0.array(), 0.0).eval());
  return bundle;
}

Tensor loss_weight(const Batch& batch, Mode mode) {
  if (mode == Mode::D0) return batch.m_mvi;
  return Tensor(batch.m_mvi.shape(), (batch.m_mvi.array() * (1.0 - batch.m_imp.array())).eval());
}

namespace {

void check_batch(const Batch& batch) {
  if (batch.x0.rank() != 3) throw DimensionError("training batch must be (B, K, L)");
  require_same_shape(batch.x0.shape(), batch.m_imp.shape(), "training batch m_imp");
  require_same_shape(batch.x0.shape(), batch.m_mvi.shape(), "training batch m_mvi");
}

}  // namespace

ad::Var training_loss(ad::Tape& tape, const Denoiser& net, const Batch& batch, std::span<const int> steps,
                      const Tensor& noise, const Schedule& schedule, const LossOptions& options) {
  check_batch(batch);
  require_same_shape(batch.x0.shape(), noise.shape(), "training noise");
  const Index rows = batch.x0.dim(0);
  if (static_cast<Index>(steps.size()) != rows) throw DimensionError("training_loss: one diffusion step per row");

  const Tensor x0(batch.x0.shape(), (batch.x0.array() * batch.m_mvi.array()).eval());
  const ConditioningBundle bundle = make_conditioning(x0, batch.m_imp, batch.m_mvi);

  Tensor x_std = noise;
  if (options.mode == Mode::D1) {
    x_std.array() = (bundle.mask.array() > 0.5).select(x0.array(), noise.array());
  }
  Tensor noisy(x0.shape());
  for (Index b = 0; b < rows; ++b) {
    const int t = steps[static_cast<std::size_t>(b)];
    if (t < 0 || t >= schedule.steps()) throw DomainError("training_loss: diffusion step out of range");
    const double ab = schedule.alpha_bar[t];
    noisy.slice(b) = std::sqrt(ab) * x0.slice(b) + std::sqrt(1.0 - ab) * x_std.slice(b);
  }
  ad::Var prediction = net(tape, noisy, steps, bundle.concatenated());
  require_same_shape(prediction.shape(), x0.shape(), "network output");
  const Tensor& target = options.target == Target::Epsilon ? x_std : x0;
  return ad::weighted_mse(prediction, target, loss_weight(batch, options.mode));
}

double training_step(const Denoiser& net, const Batch& batch, const Schedule& schedule, const LossOptions& options,
                     Rng& rng) {
  check_batch(batch);
  const Index rows = batch.x0.dim(0);
  std::vector<int> steps(static_cast<std::size_t>(rows));
  for (int& t : steps) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.steps())));
  const Tensor noise = rng.normal(batch.x0.shape());
  if (loss_weight(batch, options.mode).array().sum() == 0.0) {
    warn("training_step: no imputation targets in batch; loss is 0");
  }
  ad::Tape tape;
  ad::Var loss = training_loss(tape, net, batch, steps, noise, schedule, options);
  tape.backward(loss);
  return loss.value()[0];
}

Tensor reverse_sample(const Denoiser& net, const ConditioningBundle& bundle, const Schedule& schedule,
                      const LossOptions& options, std::span<Rng> rngs, const SampleObserver& observer) {
  const Shape& shape = bundle.cond.shape();
  if (bundle.cond.rank() != 3) throw DimensionError("reverse_sample: expected (B, K, L) conditioning");
  require_same_shape(shape, bundle.mask.shape(), "reverse_sample mask");
  const Index rows = shape[0];
  const Index row_size = shape[1] * shape[2];
  if (static_cast<Index>(rngs.size()) != rows) throw DimensionError("reverse_sample: one RNG stream per row");

  auto draw_noise = [&](Tensor& out) {
    for (Index b = 0; b < rows; ++b) {
      Rng& rng = rngs[static_cast<std::size_t>(b)];
      double* row = out.data() + b * row_size;
      for (Index i = 0; i < row_size; ++i) row[i] = rng.normal();
    }
  };
  const auto observed = (bundle.mask.array() > 0.5).eval();
  const bool constrain = options.mode == Mode::D1;
  const Tensor c = bundle.concatenated();

  Tensor x(shape);
  draw_noise(x);
  Tensor z(shape);
  std::vector<int> steps(static_cast<std::size_t>(rows));
  for (int t = schedule.steps() - 1; t >= 0; --t) {
    if (constrain) x.array() = observed.select(bundle.cond.array(), x.array());
    if (observer) observer(t, x);
    std::fill(steps.begin(), steps.end(), t);
    ad::Tape tape(false);
    const Tensor& out = net(tape, x, steps, c).value();
    require_same_shape(out.shape(), shape, "network output");
    const double alpha = schedule.alpha[t];
    const double alpha_bar = schedule.alpha_bar[t];
    Tensor::Array eps;
    if (options.target == Target::Epsilon) {
      eps = out.array();
    } else {
      eps = (x.array() - std::sqrt(alpha_bar) * out.array()) / std::sqrt(1.0 - alpha_bar);
    }
    x.array() = (x.array() - (1.0 - alpha) / std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha);
    if (t > 0) {
      draw_noise(z);
      x.array() += std::sqrt(schedule.sigma2[t]) * z.array();
    }
    if (!x.all_finite()) throw NumericError("reverse_sample: non-finite sample at step " + std::to_string(t));
  }
  if (constrain) x.array() = observed.select(bundle.cond.array(), x.array());
  if (observer) observer(-1, x);
  return x;
}

SampleSummary summarize_samples(std::span<const Tensor> samples, std::span<const double> levels) {
  if (samples.empty()) throw DomainError("summarize_samples: no samples");
  for (double q : levels) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("summarize_samples: quantile levels must lie in (0, 1)");
  }
  const Shape& shape = samples.front().shape();
  for (const Tensor& s : samples) require_same_shape(s.shape(), shape, "summarize_samples");
  const std::size_t count = samples.size();

  SampleSummary summary;
  summary.levels.assign(levels.begin(), levels.end());
  summary.quantiles.assign(levels.size(), Tensor(shape));
  summary.mean = Tensor(shape);
  std::vector<double> column(count);
  for (Index i = 0; i < summary.mean.size(); ++i) {
    for (std::size_t s = 0; s < count; ++s) column[s] = samples[s][i];
    // Offsetting by the first draw keeps the mean exact when all draws agree.
    const double base = column[0];
    double offset = 0.0;
    for (double v : column) offset += v - base;
    summary.mean[i] = base + offset / double(count);
    std::sort(column.begin(), column.end());
    for (std::size_t q = 0; q < levels.size(); ++q) {
      const double h = double(count - 1) * levels[q];
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const std::size_t hi = std::min(lo + 1, count - 1);
      summary.quantiles[q][i] = column[lo] + (h - double(lo)) * (column[hi] - column[lo]);
    }
  }
  return summary;
}

}  // namespace sssd::diffusion
