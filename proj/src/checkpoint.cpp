#include "sssd/checkpoint.hpp"

#include <fstream>

#include "sssd/binary_io.hpp"

namespace sssd::model {

namespace {
constexpr char kCheckpointMagic[9] = "SSSDCKP1";
constexpr std::uint64_t kMaxRank = 8;

void write_i64(std::ostream& os, Index v) { io::write_u64(os, static_cast<std::uint64_t>(v)); }
Index read_i64(std::istream& is) { return static_cast<Index>(io::read_u64(is)); }
}  // namespace

void save_checkpoint(const std::filesystem::path& path, SssdModel& model, const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  const ModelConfig& c = model.config();
  io::write_magic(os, kCheckpointMagic);
  for (Index v : {c.residual_layers, c.residual_channels, c.skip_channels, c.embed_dims[0], c.embed_dims[1],
                  c.embed_dims[2], c.state_dim, c.in_channels, c.length}) {
    write_i64(os, v);
  }
  io::write_u8(os, c.bidirectional ? 1 : 0);
  io::write_u8(os, c.second_s4 ? 1 : 0);
  write_i64(os, meta.diffusion.steps);
  io::write_f64(os, meta.diffusion.beta0);
  io::write_f64(os, meta.diffusion.beta1);
  io::write_u8(os, meta.diffusion.mode == diffusion::Mode::D1 ? 1 : 0);
  io::write_u8(os, meta.diffusion.target == diffusion::Target::X0 ? 1 : 0);
  write_i64(os, meta.channel_split_width);
  io::write_u64(os, static_cast<std::uint64_t>(meta.scaler.mean.size()));
  for (Index k = 0; k < meta.scaler.mean.size(); ++k) io::write_f64(os, meta.scaler.mean[k]);
  for (Index k = 0; k < meta.scaler.std.size(); ++k) io::write_f64(os, meta.scaler.std[k]);

  const auto params = model.parameters();
  io::write_u64(os, params.size());
  for (const auto* p : params) {
    io::write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    io::write_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (Index d : p->value.shape()) io::write_u64(os, static_cast<std::uint64_t>(d));
    for (double v : p->value.values()) io::write_f64(os, v);
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  io::expect_magic(is, kCheckpointMagic, "checkpoint " + path.string());
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.residual_layers = read_i64(is);
  c.residual_channels = read_i64(is);
  c.skip_channels = read_i64(is);
  for (Index& d : c.embed_dims) d = read_i64(is);
  c.state_dim = read_i64(is);
  c.in_channels = read_i64(is);
  c.length = read_i64(is);
  c.bidirectional = io::read_u8(is) != 0;
  c.second_s4 = io::read_u8(is) != 0;
  c.validate();
  ck.meta.diffusion.steps = static_cast<int>(read_i64(is));
  ck.meta.diffusion.beta0 = io::read_f64(is);
  ck.meta.diffusion.beta1 = io::read_f64(is);
  ck.meta.diffusion.mode = io::read_u8(is) ? diffusion::Mode::D1 : diffusion::Mode::D0;
  ck.meta.diffusion.target = io::read_u8(is) ? diffusion::Target::X0 : diffusion::Target::Epsilon;
  ck.meta.channel_split_width = read_i64(is);
  const auto k = static_cast<Index>(io::read_u64(is));
  if (k > (Index{1} << 24)) throw ConfigError("checkpoint: implausible scaler size");
  ck.meta.scaler.mean.resize(k);
  ck.meta.scaler.std.resize(k);
  for (Index i = 0; i < k; ++i) ck.meta.scaler.mean[i] = io::read_f64(is);
  for (Index i = 0; i < k; ++i) ck.meta.scaler.std[i] = io::read_f64(is);

  const std::uint64_t count = io::read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_length = io::read_u32(is);
    if (name_length > 4096) throw ConfigError("checkpoint: implausible tensor name length");
    t.name.resize(name_length);
    if (!is.read(t.name.data(), name_length)) throw ConfigError("unexpected end of file");
    const std::uint32_t rank = io::read_u32(is);
    if (rank == 0 || rank > kMaxRank) throw ConfigError("checkpoint: invalid tensor rank");
    Shape shape(rank);
    for (Index& d : shape) d = static_cast<Index>(io::read_u64(is));
    t.value = Tensor(shape);
    for (double& v : t.value.values()) v = io::read_f64(is);
    ck.tensors.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes");
  return ck;
}

std::unique_ptr<SssdModel> instantiate(const Checkpoint& checkpoint) {
  auto model = std::make_unique<SssdModel>(checkpoint.config, 0);
  const auto params = model->parameters();
  if (params.size() != checkpoint.tensors.size()) {
    throw ConfigError("checkpoint has " + std::to_string(checkpoint.tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& t = checkpoint.tensors[i];
    if (t.name != params[i]->name || t.value.shape() != params[i]->value.shape()) {
      throw ConfigError("checkpoint tensor '" + t.name + "' " + shape_string(t.value.shape()) +
                        " does not match model parameter '" + params[i]->name + "' " +
                        shape_string(params[i]->value.shape()));
    }
    params[i]->value = t.value;
  }
  return model;
}

}  // namespace sssd::model
