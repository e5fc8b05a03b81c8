#pragma once

#include "sssd/autodiff.hpp"

// Differentiable operations on tape variables. Rank-3 activations use the
// (batch, channels, length) layout throughout.
namespace sssd::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);

Var matmul(Var a, Var b);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var swish(Var a);

// x (B, in) -> (B, out) with weight (out, in) and bias (out).
Var linear(Var x, Var weight, Var bias);

// Per-position channel mixing: (B, Cin, L) -> (B, Cout, L), weight (Cout, Cin), bias (Cout).
Var pointwise_conv(Var x, Var weight, Var bias);

// x (B, C, L) plus v (B, C) broadcast along length.
Var add_channel_bias(Var x, Var v);

Var slice_channels(Var x, Index begin, Index count);
Var concat_channels(Var a, Var b);
Var flip_time(Var x);

// Normalizes x (B, C, L) across channels at every (batch, time) position, then
// applies a per-channel gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// y[b,h,t] = sum_{i<=t} k[h,i] u[b,h,t-i] + d[h] u[b,h,t], evaluated by FFT on
// zero-padded length next_pow2(2L). u (B, H, L), k (H, L), d (H).
// `reversed` runs the same filter backwards in time, i.e. flip(conv(flip(u))):
// y[b,h,t] = sum_{i<L-t} k[h,i] u[b,h,t+i] + d[h] u[b,h,t].
Var causal_conv(Var u, Var kernel, Var feedthrough, bool reversed = false);

// sum(weight * (pred - target)^2) / sum(weight); 0 when the weight is all zero.
Var weighted_mse(Var pred, const Tensor& target, const Tensor& weight);

}  // namespace sssd::ad
