#include "sssd/ops.hpp"

#include <cmath>
#include <memory>

#include "sssd/fft.hpp"

namespace sssd::ad {

namespace {

using Array = Tensor::Array;

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

template <typename Forward, typename Derivative>
Var elementwise(const char* op, Var a, Forward forward, Derivative derivative) {
  Tape& tape = a.tape();
  Tensor out(a.shape(), a.value().array().unaryExpr(forward).eval());
  return tape.record(op, std::move(out), {a.id()}, [a, derivative](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(a.id());
    const Tensor& y = t.value(self);
    Array local(x.size());
    for (Index i = 0; i < x.size(); ++i) local[i] = derivative(x[i], y[i]);
    t.grad_ref(a.id()).array() += g.array() * local;
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape(), (a.value().array() + b.value().array()).eval());
  return a.tape().record("add", std::move(out), {a.id(), b.id()}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a.id())) t.grad_ref(a.id()).array() += g.array();
    if (t.requires_grad(b.id())) t.grad_ref(b.id()).array() += g.array();
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out(a.shape(), (a.value().array() - b.value().array()).eval());
  return a.tape().record("sub", std::move(out), {a.id(), b.id()}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a.id())) t.grad_ref(a.id()).array() += g.array();
    if (t.requires_grad(b.id())) t.grad_ref(b.id()).array() -= g.array();
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out(a.shape(), (a.value().array() * b.value().array()).eval());
  return a.tape().record("mul", std::move(out), {a.id(), b.id()}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a.id())) t.grad_ref(a.id()).array() += g.array() * t.value(b.id()).array();
    if (t.requires_grad(b.id())) t.grad_ref(b.id()).array() += g.array() * t.value(a.id()).array();
  });
}

Var scale(Var a, double factor) {
  Tensor out(a.shape(), (a.value().array() * factor).eval());
  return a.tape().record("scale", std::move(out), {a.id()}, [a, factor](Tape& t, int self) {
    t.grad_ref(a.id()).array() += factor * t.grad_ref(self).array();
  });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().array().sum());
  return a.tape().record("sum", std::move(out), {a.id()}, [a](Tape& t, int self) {
    t.grad_ref(a.id()).array() += t.grad_ref(self)[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / double(a.value().size())); }

Var matmul(Var a, Var b) {
  require_rank(a.value(), 2, "matmul");
  require_rank(b.value(), 2, "matmul");
  if (a.value().dim(1) != b.value().dim(0)) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.value().dim(0), b.value().dim(1)});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  return a.tape().record("matmul", std::move(out), {a.id(), b.id()}, [a, b](Tape& t, int self) {
    const auto g = t.grad_ref(self).matrix();
    if (t.requires_grad(a.id())) t.grad_ref(a.id()).matrix().noalias() += g * t.value(b.id()).matrix().transpose();
    if (t.requires_grad(b.id())) t.grad_ref(b.id()).matrix().noalias() += t.value(a.id()).matrix().transpose() * g;
  });
}

Var relu(Var a) {
  return elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return elementwise(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var swish(Var a) {
  return elementwise(
      "swish", a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  require_rank(xv, 2, "linear");
  require_rank(w, 2, "linear");
  if (xv.dim(1) != w.dim(1) || bias.value().size() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " incompatible with weight " +
                         shape_string(w.shape()));
  }
  Tensor out({xv.dim(0), w.dim(0)});
  out.matrix().noalias() = xv.matrix() * w.matrix().transpose();
  out.matrix().rowwise() += bias.value().array().matrix().transpose();
  return x.tape().record("linear", std::move(out), {x.id(), weight.id(), bias.id()},
                         [x, weight, bias](Tape& t, int self) {
                           const auto g = t.grad_ref(self).matrix();
                           if (t.requires_grad(x.id())) t.grad_ref(x.id()).matrix().noalias() += g * t.value(weight.id()).matrix();
                           if (t.requires_grad(weight.id())) {
                             t.grad_ref(weight.id()).matrix().noalias() += g.transpose() * t.value(x.id()).matrix();
                           }
                           if (t.requires_grad(bias.id())) {
                             t.grad_ref(bias.id()).array() += g.colwise().sum().transpose().array();
                           }
                         });
}

Var pointwise_conv(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  require_rank(xv, 3, "pointwise_conv");
  require_rank(w, 2, "pointwise_conv");
  const Index batch = xv.dim(0), in = xv.dim(1), length = xv.dim(2), outc = w.dim(0);
  if (w.dim(1) != in || bias.value().size() != outc) {
    throw DimensionError("pointwise_conv: input " + shape_string(xv.shape()) + " incompatible with weight " +
                         shape_string(w.shape()));
  }
  Tensor out({batch, outc, length});
  const auto wm = w.matrix();
  const auto bv = bias.value().array().matrix();
  for (Index b = 0; b < batch; ++b) {
    auto y = out.slice(b);
    y.noalias() = wm * xv.slice(b);
    y.colwise() += bv;
  }
  return x.tape().record("pointwise_conv", std::move(out), {x.id(), weight.id(), bias.id()},
                         [x, weight, bias](Tape& t, int self) {
                           const Tensor& g = t.grad_ref(self);
                           const Tensor& xv = t.value(x.id());
                           const Index batch = g.dim(0);
                           if (t.requires_grad(x.id())) {
                             Tensor& gx = t.grad_ref(x.id());
                             const auto wm = t.value(weight.id()).matrix();
                             for (Index b = 0; b < batch; ++b) gx.slice(b).noalias() += wm.transpose() * g.slice(b);
                           }
                           if (t.requires_grad(weight.id())) {
                             auto gw = t.grad_ref(weight.id()).matrix();
                             for (Index b = 0; b < batch; ++b) gw.noalias() += g.slice(b) * xv.slice(b).transpose();
                           }
                           if (t.requires_grad(bias.id())) {
                             auto& gb = t.grad_ref(bias.id()).array();
                             for (Index b = 0; b < batch; ++b) gb += g.slice(b).rowwise().sum().array();
                           }
                         });
}

Var add_channel_bias(Var x, Var v) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "add_channel_bias");
  if (v.value().size() != xv.dim(0) * xv.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + shape_string(v.shape()) + " does not match " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const Index batch = xv.dim(0), channels = xv.dim(1);
  for (Index b = 0; b < batch; ++b) {
    out.slice(b).colwise() += v.value().array().segment(b * channels, channels).matrix();
  }
  return x.tape().record("add_channel_bias", std::move(out), {x.id(), v.id()}, [x, v](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(x.id())) t.grad_ref(x.id()).array() += g.array();
    if (t.requires_grad(v.id())) {
      Tensor& gv = t.grad_ref(v.id());
      const Index channels = g.dim(1);
      for (Index b = 0; b < g.dim(0); ++b) {
        gv.array().segment(b * channels, channels) += g.slice(b).rowwise().sum().array();
      }
    }
  });
}

Var slice_channels(Var x, Index begin, Index count) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "slice_channels");
  if (begin < 0 || count <= 0 || begin + count > xv.dim(1)) {
    throw DimensionError("slice_channels: range out of bounds for " + shape_string(xv.shape()));
  }
  Tensor out({xv.dim(0), count, xv.dim(2)});
  for (Index b = 0; b < xv.dim(0); ++b) out.slice(b) = xv.slice(b).middleRows(begin, count);
  return x.tape().record("slice_channels", std::move(out), {x.id()}, [x, begin, count](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gx = t.grad_ref(x.id());
    for (Index b = 0; b < g.dim(0); ++b) gx.slice(b).middleRows(begin, count) += g.slice(b);
  });
}

Var concat_channels(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 3, "concat_channels");
  require_rank(bv, 3, "concat_channels");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2)) {
    throw DimensionError("concat_channels: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  const Index ca = av.dim(1), cb = bv.dim(1);
  Tensor out({av.dim(0), ca + cb, av.dim(2)});
  for (Index i = 0; i < av.dim(0); ++i) {
    out.slice(i).topRows(ca) = av.slice(i);
    out.slice(i).bottomRows(cb) = bv.slice(i);
  }
  return a.tape().record("concat_channels", std::move(out), {a.id(), b.id()}, [a, b, ca, cb](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    for (Index i = 0; i < g.dim(0); ++i) {
      if (t.requires_grad(a.id())) t.grad_ref(a.id()).slice(i) += g.slice(i).topRows(ca);
      if (t.requires_grad(b.id())) t.grad_ref(b.id()).slice(i) += g.slice(i).bottomRows(cb);
    }
  });
}

Var flip_time(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "flip_time");
  Tensor out(xv.shape());
  for (Index b = 0; b < xv.dim(0); ++b) out.slice(b) = xv.slice(b).rowwise().reverse();
  return x.tape().record("flip_time", std::move(out), {x.id()}, [x](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gx = t.grad_ref(x.id());
    for (Index b = 0; b < g.dim(0); ++b) gx.slice(b) += g.slice(b).rowwise().reverse();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "layer_norm");
  const Index batch = xv.dim(0), channels = xv.dim(1), length = xv.dim(2);
  if (gain.value().size() != channels || bias.value().size() != channels) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(channels) + " entries");
  }
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<Tensor>(Shape{batch, length});
  Tensor out(xv.shape());
  const auto g = gain.value().array().matrix();
  const auto bv = bias.value().array().matrix();
  for (Index b = 0; b < batch; ++b) {
    const auto xs = xv.slice(b);
    const Eigen::RowVectorXd mu = xs.colwise().mean();
    auto xhat = normalized->slice(b);
    xhat = xs.rowwise() - mu;
    const Eigen::RowVectorXd var = xhat.array().square().colwise().mean();
    const Eigen::RowVectorXd rstd = (var.array() + eps).rsqrt();
    inv_std->matrix().row(b) = rstd;
    xhat.array().rowwise() *= rstd.array();
    auto y = out.slice(b);
    y = g.asDiagonal() * xhat;
    y.colwise() += bv;
  }
  return x.tape().record("layer_norm", std::move(out), {x.id(), gain.id(), bias.id()},
                         [x, gain, bias, normalized, inv_std](Tape& t, int self) {
                           const Tensor& gy = t.grad_ref(self);
                           const Index batch = gy.dim(0), channels = gy.dim(1);
                           const auto gv = t.value(gain.id()).array().matrix();
                           for (Index b = 0; b < batch; ++b) {
                             const auto dy = gy.slice(b);
                             const auto xhat = normalized->slice(b);
                             if (t.requires_grad(gain.id())) {
                               t.grad_ref(gain.id()).array() += dy.cwiseProduct(xhat).rowwise().sum().array();
                             }
                             if (t.requires_grad(bias.id())) t.grad_ref(bias.id()).array() += dy.rowwise().sum().array();
                             if (t.requires_grad(x.id())) {
                               const RowMatrix<double> dxhat = gv.asDiagonal() * dy;
                               const Eigen::RowVectorXd m1 = dxhat.colwise().sum() / double(channels);
                               const Eigen::RowVectorXd m2 =
                                   dxhat.cwiseProduct(xhat).colwise().sum() / double(channels);
                               RowMatrix<double> dx = dxhat.rowwise() - m1;
                               dx -= xhat * m2.asDiagonal();
                               t.grad_ref(x.id()).slice(b) += dx * inv_std->matrix().row(b).asDiagonal();
                             }
                           }
                         });
}

namespace {

struct ConvCache {
  Index padded = 0;
  fft::PlanarSpectra input;   // (bins, B*H)
  fft::PlanarSpectra kernel;  // (bins, H)
};

// Per-thread spectra reused across calls; contents do not outlive one use.
fft::PlanarSpectra& scratch_spectra() {
  thread_local fft::PlanarSpectra s;
  return s;
}

// out[f, b*H + h] = x[f, b*H + h] * k[f, h], or times conj(k[f, h]).
void multiply_by_kernel(const fft::PlanarSpectra& x, const fft::PlanarSpectra& k, Index batch, Index heads,
                        bool conjugate, fft::PlanarSpectra& out) {
  const Index rows = batch * heads;
  const double sign = conjugate ? -1.0 : 1.0;
  for (Index f = 0; f < x.bins; ++f) {
    const double* kr = k.re.data() + f * heads;
    const double* ki = k.im.data() + f * heads;
    for (Index b = 0; b < batch; ++b) {
      const Index o = f * rows + b * heads;
      const double* xr = x.re.data() + o;
      const double* xi = x.im.data() + o;
      double* pr = out.re.data() + o;
      double* pi = out.im.data() + o;
      for (Index h = 0; h < heads; ++h) {
        const double ar = xr[h], ai = xi[h], wr = kr[h], wi = sign * ki[h];
        pr[h] = ar * wr - ai * wi;
        pi[h] = ar * wi + ai * wr;
      }
    }
  }
}

}  // namespace

Var causal_conv(Var u, Var kernel, Var feedthrough, bool reversed) {
  const Tensor& uv = u.value();
  const Tensor& kv = kernel.value();
  require_rank(uv, 3, "causal_conv");
  require_rank(kv, 2, "causal_conv");
  const Index batch = uv.dim(0), heads = uv.dim(1), length = uv.dim(2);
  if (kv.dim(0) != heads || kv.dim(1) != length) {
    throw DimensionError("causal_conv: kernel " + shape_string(kv.shape()) + " does not match input " +
                         shape_string(uv.shape()));
  }
  if (feedthrough.value().size() != heads) throw DimensionError("causal_conv: feedthrough must have H entries");

  auto cache = std::make_shared<ConvCache>();
  cache->padded = fft::next_power_of_two(2 * length);
  const auto& plan = fft::batched_plan(cache->padded);
  const Index bins = plan.bins(), rows = batch * heads;
  plan.forward(kv.data(), heads, length, length, cache->kernel);
  plan.forward(uv.data(), rows, length, length, cache->input, reversed);

  fft::PlanarSpectra& prod = scratch_spectra();
  prod.reshape(bins, rows);
  multiply_by_kernel(cache->input, cache->kernel, batch, heads, false, prod);
  Tensor out = Tensor::uninitialized(uv.shape());
  plan.inverse(prod, out.data(), length, length, reversed);
  const auto& d = feedthrough.value();
  for (Index b = 0; b < batch; ++b) {
    out.slice(b).array() += uv.slice(b).array().colwise() * d.array();
  }
  if (!u.tape().any_requires_grad({u, kernel, feedthrough})) cache->input = {};

  return u.tape().record(
      "causal_conv", std::move(out), {u.id(), kernel.id(), feedthrough.id()},
      [u, kernel, feedthrough, cache, reversed](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& uv = t.value(u.id());
        const Index batch = g.dim(0), heads = g.dim(1), length = g.dim(2);
        const Index rows = batch * heads;
        const auto& plan = fft::batched_plan(cache->padded);
        const Index bins = plan.bins();
        const auto& d = t.value(feedthrough.id());

        // Adjoint of y = k * u is correlation: conj spectra.
        fft::PlanarSpectra& gs = scratch_spectra();
        plan.forward(g.data(), rows, length, length, gs, reversed);
        if (t.requires_grad(kernel.id())) {
          fft::PlanarSpectra acc;
          acc.resize(bins, heads);
          for (Index f = 0; f < bins; ++f) {
            double* __restrict ar = acc.re.data() + f * heads;
            double* __restrict ai = acc.im.data() + f * heads;
            for (Index b = 0; b < batch; ++b) {
              const Index o = f * rows + b * heads;
              const double* __restrict gr = gs.re.data() + o;
              const double* __restrict gi = gs.im.data() + o;
              const double* __restrict ur = cache->input.re.data() + o;
              const double* __restrict ui = cache->input.im.data() + o;
              for (Index h = 0; h < heads; ++h) {
                ar[h] += gr[h] * ur[h] + gi[h] * ui[h];
                ai[h] += gi[h] * ur[h] - gr[h] * ui[h];
              }
            }
          }
          Tensor gk = Tensor::uninitialized(Shape{heads, length});
          plan.inverse(acc, gk.data(), length, length);
          t.accumulate_grad(kernel.id(), std::move(gk));
        }
        if (t.requires_grad(u.id())) {
          multiply_by_kernel(gs, cache->kernel, batch, heads, true, gs);
          Tensor gu = Tensor::uninitialized(g.shape());
          plan.inverse(gs, gu.data(), length, length, reversed);
          for (Index b = 0; b < batch; ++b) gu.slice(b).array() += g.slice(b).array().colwise() * d.array();
          t.accumulate_grad(u.id(), std::move(gu));
        }
        if (t.requires_grad(feedthrough.id())) {
          Tensor& gd = t.grad_ref(feedthrough.id());
          for (Index b = 0; b < batch; ++b) {
            gd.array() += (g.slice(b).array() * uv.slice(b).array()).rowwise().sum();
          }
        }
      });
}

Var weighted_mse(Var pred, const Tensor& target, const Tensor& weight) {
  require_same_shape(pred.shape(), target.shape(), "weighted_mse");
  require_same_shape(pred.shape(), weight.shape(), "weighted_mse");
  const double total = weight.array().sum();
  const Array diff = pred.value().array() - target.array();
  const double loss = total > 0.0 ? (weight.array() * diff.square()).sum() / total : 0.0;
  auto coeff = std::make_shared<Array>(total > 0.0 ? (2.0 / total * weight.array() * diff).eval()
                                                   : Array::Zero(diff.size()).eval());
  return pred.tape().record("weighted_mse", Tensor::scalar(loss), {pred.id()}, [pred, coeff](Tape& t, int self) {
    t.grad_ref(pred.id()).array() += t.grad_ref(self)[0] * *coeff;
  });
}

}  // namespace sssd::ad
