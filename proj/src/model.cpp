#include "sssd/model.hpp"

#include <cmath>

#include "sssd/ops.hpp"

namespace sssd::model {

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* what) {
    if (v < 1) throw ConfigError(std::string("model config: ") + what + " must be positive");
  };
  positive(residual_layers, "residual_layers");
  positive(residual_channels, "residual_channels");
  positive(skip_channels, "skip_channels");
  positive(state_dim, "state_dim");
  positive(in_channels, "in_channels");
  positive(length, "length");
  for (Index d : embed_dims) positive(d, "embed_dims");
  if (embed_dims[0] < 4 || embed_dims[0] % 2 != 0) throw ConfigError("model config: embed_dims[0] must be even and >= 4");
}

ModelConfig ModelConfig::reference(Index in_channels, Index length) {
  ModelConfig c;
  c.residual_layers = 36;
  c.residual_channels = 256;
  c.skip_channels = 256;
  c.embed_dims = {128, 512, 512};
  c.state_dim = 64;
  c.bidirectional = true;
  c.second_s4 = true;
  c.in_channels = in_channels;
  c.length = length;
  return c;
}

ModelConfig ModelConfig::desk(Index in_channels, Index length) {
  ModelConfig c;
  c.in_channels = in_channels;
  c.length = length;
  return c;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.residual_layers == b.residual_layers && a.residual_channels == b.residual_channels &&
         a.skip_channels == b.skip_channels && a.embed_dims == b.embed_dims && a.state_dim == b.state_dim &&
         a.bidirectional == b.bidirectional && a.second_s4 == b.second_s4 && a.in_channels == b.in_channels &&
         a.length == b.length;
}

Tensor sinusoidal_encoding(std::span<const int> steps, Index dim) {
  const Index half = dim / 2;
  Tensor out({static_cast<Index>(steps.size()), dim});
  const double log_base = std::log(10000.0) / double(half - 1);
  for (std::size_t b = 0; b < steps.size(); ++b) {
    for (Index j = 0; j < half; ++j) {
      const double phase = double(steps[b]) * std::exp(-log_base * double(j));
      out(static_cast<Index>(b), j) = std::sin(phase);
      out(static_cast<Index>(b), half + j) = std::cos(phase);
    }
  }
  return out;
}

namespace {

// Kaiming-normal weights, zero bias.
PointwiseLinear make_conv(const std::string& name, Index out, Index in, Rng& rng) {
  PointwiseLinear p{{name + ".weight", Tensor(Shape{out, in}), {}}, {name + ".bias", Tensor(Shape{out}), {}}};
  const double sd = std::sqrt(2.0 / double(in));
  for (double& w : p.weight.value.values()) w = sd * rng.normal();
  return p;
}

// Uniform(+-1/sqrt(in)) weights and bias.
PointwiseLinear make_dense(const std::string& name, Index out, Index in, Rng& rng) {
  PointwiseLinear p{{name + ".weight", Tensor(Shape{out, in}), {}}, {name + ".bias", Tensor(Shape{out}), {}}};
  const double bound = 1.0 / std::sqrt(double(in));
  for (double& w : p.weight.value.values()) w = rng.uniform(-bound, bound);
  for (double& w : p.bias.value.values()) w = rng.uniform(-bound, bound);
  return p;
}

PointwiseLinear make_zero(const std::string& name, Index out, Index in) {
  return {{name + ".weight", Tensor(Shape{out, in}), {}}, {name + ".bias", Tensor(Shape{out}), {}}};
}

ad::Var conv(ad::Tape& tape, PointwiseLinear& p, ad::Var x) {
  return ad::pointwise_conv(x, tape.parameter(p.weight), tape.parameter(p.bias));
}

ad::Var dense(ad::Tape& tape, PointwiseLinear& p, ad::Var x) {
  return ad::linear(x, tape.parameter(p.weight), tape.parameter(p.bias));
}

void push(std::vector<ad::Parameter*>& out, PointwiseLinear& p) {
  out.push_back(&p.weight);
  out.push_back(&p.bias);
}

s4::S4LayerConfig s4_config(const ModelConfig& config, Index channels) {
  s4::S4LayerConfig c;
  c.channels = channels;
  c.state_dim = config.state_dim;
  c.bidirectional = config.bidirectional;
  return c;
}

}  // namespace

ResidualBlock::ResidualBlock(const std::string& prefix, const ModelConfig& config, Rng& rng)
    : channels_(config.residual_channels),
      skip_channels_(config.skip_channels),
      embed_(make_dense(prefix + ".embed", config.residual_channels, config.embed_dims[2], rng)),
      s4_a_(prefix + ".s4a", s4_config(config, config.residual_channels), rng),
      expand_(make_conv(prefix + ".expand", 2 * config.residual_channels, config.residual_channels, rng)),
      cond_(make_conv(prefix + ".cond", 2 * config.residual_channels, 2 * config.in_channels, rng)),
      out_(make_conv(prefix + ".out", config.residual_channels + config.skip_channels, config.residual_channels,
                     rng)) {
  if (config.second_s4) {
    s4_b_ = std::make_unique<s4::S4Layer>(prefix + ".s4b", s4_config(config, 2 * config.residual_channels), rng);
  }
}

ResidualBlock::Output ResidualBlock::forward(ad::Tape& tape, ad::Var h, ad::Var embedding, ad::Var cond) {
  ad::Var y = ad::add_channel_bias(h, dense(tape, embed_, embedding));
  y = s4_a_.forward(tape, y);
  y = conv(tape, expand_, y);
  y = ad::add(y, conv(tape, cond_, cond));
  if (s4_b_) y = s4_b_->forward(tape, y);
  ad::Var gated = ad::mul(ad::tanh(ad::slice_channels(y, 0, channels_)),
                          ad::sigmoid(ad::slice_channels(y, channels_, channels_)));
  ad::Var out = conv(tape, out_, gated);
  return {ad::add(h, ad::slice_channels(out, 0, channels_)), ad::slice_channels(out, channels_, skip_channels_)};
}

void ResidualBlock::collect(std::vector<ad::Parameter*>& out) {
  push(out, embed_);
  s4_a_.collect(out);
  push(out, expand_);
  push(out, cond_);
  if (s4_b_) s4_b_->collect(out);
  push(out, out_);
}

SssdModel::SssdModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  input_ = make_conv("input", config_.residual_channels, config_.in_channels, rng);
  embed1_ = make_dense("embed.fc1", config_.embed_dims[1], config_.embed_dims[0], rng);
  embed2_ = make_dense("embed.fc2", config_.embed_dims[2], config_.embed_dims[1], rng);
  for (Index i = 0; i < config_.residual_layers; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock>("block" + std::to_string(i), config_, rng));
  }
  skip_out_ = make_conv("output.skip", config_.skip_channels, config_.skip_channels, rng);
  final_ = make_zero("output.final", config_.in_channels, config_.skip_channels);
}

ad::Var SssdModel::forward(ad::Tape& tape, const Tensor& x_t, std::span<const int> steps, const Tensor& cond) {
  const Index k = config_.in_channels;
  if (x_t.rank() != 3 || x_t.dim(1) != k) {
    throw DimensionError("SssdModel: expected (B, " + std::to_string(k) + ", L) input, got " +
                         shape_string(x_t.shape()));
  }
  const Index batch = x_t.dim(0), length = x_t.dim(2);
  if (cond.rank() != 3 || cond.dim(0) != batch || cond.dim(1) != 2 * k || cond.dim(2) != length) {
    throw DimensionError("SssdModel: conditioning " + shape_string(cond.shape()) + " does not match input " +
                         shape_string(x_t.shape()));
  }
  if (static_cast<Index>(steps.size()) != batch) throw DimensionError("SssdModel: one diffusion step per row");

  ad::Var emb = tape.constant(sinusoidal_encoding(steps, config_.embed_dims[0]));
  emb = ad::swish(dense(tape, embed1_, emb));
  emb = ad::swish(dense(tape, embed2_, emb));

  ad::Var h = ad::relu(conv(tape, input_, tape.constant(x_t)));
  ad::Var c = tape.constant(cond);
  ad::Var skip;
  for (auto& block : blocks_) {
    auto [next, s] = block->forward(tape, h, emb, c);
    h = next;
    skip = skip.id() < 0 ? s : ad::add(skip, s);
  }
  ad::Var out = ad::scale(skip, 1.0 / std::sqrt(double(blocks_.size())));
  out = ad::relu(conv(tape, skip_out_, out));
  return conv(tape, final_, out);
}

diffusion::Denoiser SssdModel::denoiser() {
  return [this](ad::Tape& tape, const Tensor& x, std::span<const int> steps, const Tensor& c) {
    return forward(tape, x, steps, c);
  };
}

std::vector<ad::Parameter*> SssdModel::parameters() {
  std::vector<ad::Parameter*> out;
  push(out, input_);
  push(out, embed1_);
  push(out, embed2_);
  for (auto& block : blocks_) block->collect(out);
  push(out, skip_out_);
  push(out, final_);
  return out;
}

Index SssdModel::parameter_count() {
  Index total = 0;
  for (auto* p : parameters()) total += p->value.size();
  return total;
}

Index count_parameters(const ModelConfig& c) {
  auto dense = [](Index out, Index in) { return out * in + out; };
  auto s4 = [&](Index h) {
    const Index per_direction = h * c.state_dim + 2 * h;  // C, log_delta, D
    Index n = 2 * h + per_direction;                      // norm gain/bias
    if (c.bidirectional) n += per_direction + dense(h, 2 * h);
    return n;
  };
  const Index r = c.residual_channels;
  Index block = dense(r, c.embed_dims[2]) + s4(r) + dense(2 * r, r) + dense(2 * r, 2 * c.in_channels) +
                dense(r + c.skip_channels, r);
  if (c.second_s4) block += s4(2 * r);
  return dense(r, c.in_channels) + dense(c.embed_dims[1], c.embed_dims[0]) + dense(c.embed_dims[2], c.embed_dims[1]) +
         c.residual_layers * block + dense(c.skip_channels, c.skip_channels) + dense(c.in_channels, c.skip_channels);
}

}  // namespace sssd::model
