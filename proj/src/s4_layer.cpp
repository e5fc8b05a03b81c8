#include "sssd/s4_layer.hpp"

#include <cmath>
#include <memory>

#include "sssd/ops.hpp"

namespace sssd::s4 {

namespace {

struct HeadCache {
  Eigen::MatrixXd a_bar;
  Eigen::VectorXd b_bar;
  Eigen::MatrixXd states;  // (N, L), column i = A_bar^i B_bar
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  double delta = 0.0;
};

// y = a x for a column-major n x n matrix.
void matvec(const double* a, const double* x, double* __restrict y, Index n) {
  for (Index i = 0; i < n; ++i) y[i] = a[i] * x[0];
  for (Index j = 1; j < n; ++j) {
    const double xj = x[j];
    const double* col = a + j * n;
    for (Index i = 0; i < n; ++i) y[i] += col[i] * xj;
  }
}

}  // namespace

ad::Var ssm_kernel(ad::Var c, ad::Var log_delta, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                   Index length) {
  const Tensor& cv = c.value();
  const Index heads = cv.dim(0);
  const Index n = a.rows();
  if (cv.rank() != 2 || cv.dim(1) != n || log_delta.value().size() != heads || b.size() != n) {
    throw DimensionError("ssm_kernel: C " + shape_string(cv.shape()) + " inconsistent with state dimension " +
                         std::to_string(n));
  }
  if (length < 1) throw DomainError("ssm_kernel: length must be >= 1");

  auto caches = std::make_shared<std::vector<HeadCache>>(static_cast<std::size_t>(heads));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Tensor out({heads, length});
  for (Index h = 0; h < heads; ++h) {
    HeadCache& hc = (*caches)[static_cast<std::size_t>(h)];
    hc.delta = std::exp(log_delta.value()[h]);
    const Eigen::MatrixXd half = 0.5 * hc.delta * a;
    hc.lu.compute(eye - half);
    hc.a_bar = hc.lu.solve(eye + half);
    hc.b_bar = hc.lu.solve(hc.delta * b);
    hc.states.resize(n, length);
    hc.states.col(0) = hc.b_bar;
    for (Index i = 1; i < length; ++i) matvec(hc.a_bar.data(), hc.states.col(i - 1).data(), hc.states.col(i).data(), n);
    const Eigen::Map<const Eigen::RowVectorXd> crow(cv.data() + h * n, n);
    Eigen::Map<Eigen::RowVectorXd>(out.data() + h * length, length).noalias() = crow * hc.states;
  }

  return c.tape().record(
      "ssm_kernel", std::move(out), {c.id(), log_delta.id()}, [c, log_delta, caches, a, b](ad::Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& cv = t.value(c.id());
        const Index heads = g.dim(0), length = g.dim(1), n = a.rows();
        const bool need_c = t.requires_grad(c.id());
        const bool need_delta = t.requires_grad(log_delta.id());
        const Eigen::MatrixXd half_a = 0.5 * a;
        for (Index h = 0; h < heads; ++h) {
          const HeadCache& hc = (*caches)[static_cast<std::size_t>(h)];
          const Eigen::Map<const Eigen::VectorXd> gk(g.data() + h * length, length);
          if (need_c) {
            Eigen::Map<Eigen::RowVectorXd>(t.grad_ref(c.id()).data() + h * n, n) +=
                (hc.states * gk).transpose();
          }
          if (!need_delta) continue;
          // Adjoint of the propagation v_{i+1} = A_bar v_i with k_i = c . v_i.
          const Eigen::Map<const Eigen::VectorXd> crow(cv.data() + h * n, n);
          const Eigen::MatrixXd a_bar_t = hc.a_bar.transpose();
          Eigen::MatrixXd adj(n, length);
          adj.col(length - 1) = crow * gk[length - 1];
          for (Index i = length - 2; i >= 0; --i) {
            matvec(a_bar_t.data(), adj.col(i + 1).data(), adj.col(i).data(), n);
            adj.col(i) += crow * gk[i];
          }
          Eigen::MatrixXd grad_a_bar = Eigen::MatrixXd::Zero(n, n);
          if (length > 1) {
            grad_a_bar.noalias() = adj.rightCols(length - 1) * hc.states.leftCols(length - 1).transpose();
          }
          const Eigen::VectorXd grad_b_bar = adj.col(0);
          // dA_bar/dDelta = M^-1 (A/2)(I + A_bar), dB_bar/dDelta = M^-1 (B + (A/2) B_bar).
          Eigen::MatrixXd da = half_a * hc.a_bar;
          da += half_a;
          const Eigen::MatrixXd dA_bar = hc.lu.solve(da);
          const Eigen::VectorXd dB_bar = hc.lu.solve(b + half_a * hc.b_bar);
          const double d_delta = grad_a_bar.cwiseProduct(dA_bar).sum() + grad_b_bar.dot(dB_bar);
          t.grad_ref(log_delta.id())[h] += hc.delta * d_delta;
        }
      });
}

S4Layer::S4Layer(const std::string& prefix, const S4LayerConfig& config, Rng& rng)
    : config_(config), a_(hippo_legs<double>(config.state_dim)), b_(hippo_legs_input<double>(config.state_dim)) {
  if (config_.channels < 1) throw DomainError("S4Layer: channel count must be positive");
  if (!(config_.delta_min > 0.0 && config_.delta_min <= config_.delta_max)) {
    throw DomainError("S4Layer: invalid step-size range");
  }
  const Index h = config_.channels;
  norm_gain_ = {prefix + ".norm.gain", Tensor(Shape{h}, 1.0), {}};
  norm_bias_ = {prefix + ".norm.bias", Tensor(Shape{h}, 0.0), {}};
  init_direction(forward_, prefix + ".fwd", rng);
  if (config_.bidirectional) {
    init_direction(backward_, prefix + ".bwd", rng);
    const double bound = 1.0 / std::sqrt(double(2 * h));
    proj_weight_ = {prefix + ".proj.weight", Tensor(Shape{h, 2 * h}), {}};
    for (double& w : proj_weight_.value.values()) w = rng.uniform(-bound, bound);
    proj_bias_ = {prefix + ".proj.bias", Tensor(Shape{h}, 0.0), {}};
  }
}

void S4Layer::init_direction(Direction& dir, const std::string& prefix, Rng& rng) {
  const Index h = config_.channels, n = config_.state_dim;
  dir.c = {prefix + ".c", Tensor(Shape{h, n}), {}};
  const double c_scale = 1.0 / std::sqrt(double(n));
  for (double& v : dir.c.value.values()) v = c_scale * rng.normal();
  dir.log_delta = {prefix + ".log_delta", Tensor(Shape{h}), {}};
  const double lo = std::log(config_.delta_min), hi = std::log(config_.delta_max);
  for (double& v : dir.log_delta.value.values()) v = rng.uniform(lo, hi);
  dir.d = {prefix + ".d", Tensor(Shape{h}), {}};
  for (double& v : dir.d.value.values()) v = rng.normal();
}

ad::Var S4Layer::run_direction(ad::Tape& tape, Direction& dir, ad::Var z, bool reversed) {
  const Index length = z.value().dim(2);
  ad::Var kernel = ssm_kernel(tape.parameter(dir.c), tape.parameter(dir.log_delta), a_, b_, length);
  return ad::causal_conv(z, kernel, tape.parameter(dir.d), reversed);
}

ad::Var S4Layer::forward(ad::Tape& tape, ad::Var x) {
  if (x.value().rank() != 3 || x.value().dim(1) != config_.channels) {
    throw DimensionError("S4Layer: expected (B, " + std::to_string(config_.channels) + ", L) input, got " +
                         shape_string(x.shape()));
  }
  ad::Var z = ad::layer_norm(x, tape.parameter(norm_gain_), tape.parameter(norm_bias_));
  ad::Var y = run_direction(tape, forward_, z);
  if (!config_.bidirectional) return y;
  ad::Var reversed = run_direction(tape, backward_, z, true);
  return ad::pointwise_conv(ad::concat_channels(y, reversed), tape.parameter(proj_weight_),
                            tape.parameter(proj_bias_));
}

void S4Layer::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&norm_gain_);
  out.push_back(&norm_bias_);
  for (Direction* dir : {&forward_, &backward_}) {
    if (dir == &backward_ && !config_.bidirectional) break;
    out.push_back(&dir->c);
    out.push_back(&dir->log_delta);
    out.push_back(&dir->d);
  }
  if (config_.bidirectional) {
    out.push_back(&proj_weight_);
    out.push_back(&proj_bias_);
  }
}

}  // namespace sssd::s4
