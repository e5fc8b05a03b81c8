#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace testing {

std::vector<std::complex<double>> naive_rdft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double re = 0, im = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const long double angle = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * j) % n) /
                                static_cast<long double>(n);
      re += x[j] * std::cos(angle);
      im += x[j] * std::sin(angle);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

std::vector<double> naive_causal_conv(const std::vector<double>& k, const std::vector<double>& u, double d) {
  std::vector<double> y(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) {
    long double s = d * u[t];
    for (std::size_t i = 0; i <= t; ++i) s += static_cast<long double>(k[i]) * u[t - i];
    y[t] = static_cast<double>(s);
  }
  return y;
}

Tensor random_tensor(const Shape& shape, sssd::Rng& rng, double scale) {
  Tensor t(shape);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

Tensor random_mask(const Shape& shape, sssd::Rng& rng, double p_one) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform() < p_one ? 1.0 : 0.0;
  return t;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  sssd::require_same_shape(a.shape(), b.shape(), "max_relative_error");
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  sssd::require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  return (a.array() - b.array()).abs().maxCoeff();
}

GradientComparison compare_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  GradientComparison out;
  {
    sssd::ad::Tape tape;
    std::vector<sssd::ad::Var> leaves;
    for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x));
    sssd::ad::Var y = f(tape, leaves);
    tape.backward(y);
    for (const auto& leaf : leaves) out.analytic.push_back(leaf.grad());
  }
  std::vector<Tensor> work = inputs;
  auto evaluate = [&] {
    sssd::ad::Tape tape(false);
    std::vector<sssd::ad::Var> leaves;
    for (const Tensor& x : work) leaves.push_back(tape.constant(x));
    return f(tape, leaves).value()[0];
  };
  for (Tensor& x : work) out.numeric.push_back(numeric_gradient(evaluate, x, h));
  return out;
}

Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h) {
  Tensor g = Tensor::zeros_like(x);
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

sssd::model::ModelConfig tiny_config(Index in_channels, Index length) {
  sssd::model::ModelConfig c;
  c.residual_layers = 2;
  c.residual_channels = 8;
  c.skip_channels = 8;
  c.embed_dims = {8, 16, 16};
  c.state_dim = 4;
  c.bidirectional = true;
  c.second_s4 = true;
  c.in_channels = in_channels;
  c.length = length;
  return c;
}

void perturb_parameters(sssd::model::SssdModel& model, std::uint64_t seed, double scale) {
  sssd::Rng rng(seed);
  for (auto* p : model.parameters()) {
    const bool is_log_delta = p->name.ends_with("log_delta");
    for (double& v : p->value.values()) v += is_log_delta ? 0.0 : scale * rng.normal();
  }
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Tensor median_impute(const Tensor& x, const Tensor& cond) {
  Tensor out = x;
  for (Index b = 0; b < x.dim(0); ++b) {
    for (Index k = 0; k < x.dim(1); ++k) {
      std::vector<double> known;
      for (Index t = 0; t < x.dim(2); ++t) {
        if (cond(b, k, t) > 0.5) known.push_back(x(b, k, t));
      }
      const double fill = known.empty() ? 0.0 : median_of(known);
      for (Index t = 0; t < x.dim(2); ++t) {
        if (cond(b, k, t) < 0.5) out(b, k, t) = fill;
      }
    }
  }
  return out;
}

Tensor hold_last_impute(const Tensor& x, const Tensor& cond) {
  Tensor out = x;
  const Index length = x.dim(2);
  for (Index b = 0; b < x.dim(0); ++b) {
    for (Index k = 0; k < x.dim(1); ++k) {
      Index first = 0;
      while (first < length && cond(b, k, first) < 0.5) ++first;
      const double lead = first < length ? x(b, k, first) : 0.0;
      double last = lead;
      for (Index t = 0; t < length; ++t) {
        if (cond(b, k, t) > 0.5) {
          last = x(b, k, t);
        } else {
          out(b, k, t) = t < first ? lead : last;
        }
      }
    }
  }
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sssd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace testing
