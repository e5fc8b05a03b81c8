#include "sssd/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "sssd/binary_io.hpp"
#include "sssd/rng.hpp"

namespace sssd::data {

namespace {
constexpr char kDatasetMagic[9] = "SSSDDAT1";
}

std::vector<Index> Dataset::indices(Split which) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(static_cast<Index>(i));
  }
  return out;
}

void Dataset::validate() const {
  if (values.rank() != 3) throw ConfigError("dataset values must be (n, K, L)");
  require_same_shape(values.shape(), observed.shape(), "dataset mask");
  if (static_cast<Index>(split.size()) != samples()) throw ConfigError("dataset split tags do not match sample count");
  if (!values.all_finite()) throw ConfigError("dataset contains non-finite values");
}

Tensor gather(const Tensor& t, const std::vector<Index>& rows) {
  if (rows.empty()) throw DimensionError("gather: no rows selected");
  Tensor out({static_cast<Index>(rows.size()), t.dim(1), t.dim(2)});
  for (std::size_t i = 0; i < rows.size(); ++i) out.slice(static_cast<Index>(i)) = t.slice(rows[i]);
  return out;
}

void assign_splits(Dataset& d, double train, double val) {
  const Index n = d.samples();
  const auto n_train = static_cast<Index>(std::floor(train * double(n)));
  const auto n_val = static_cast<Index>(std::floor(val * double(n)));
  d.split.assign(static_cast<std::size_t>(n), Split::Test);
  for (Index i = 0; i < n; ++i) {
    if (i < n_train) {
      d.split[static_cast<std::size_t>(i)] = Split::Train;
    } else if (i < n_train + n_val) {
      d.split[static_cast<std::size_t>(i)] = Split::Val;
    }
  }
}

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "sines") return SynthKind::Sines;
  if (text == "damped") return SynthKind::Damped;
  if (text == "square-mix") return SynthKind::SquareMix;
  throw ConfigError("unknown synthetic kind '" + text + "' (expected sines, damped or square-mix)");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::Sines: return "sines";
    case SynthKind::Damped: return "damped";
    case SynthKind::SquareMix: return "square-mix";
  }
  return "?";
}

Dataset synth_dataset(SynthKind kind, Index n, Index channels, Index length, double noise_sd, std::uint64_t seed) {
  if (n < 1 || channels < 1 || length < 2) throw ConfigError("synth_dataset: dimensions must be positive");
  if (noise_sd < 0.0) throw ConfigError("synth_dataset: noise_sd must be non-negative");
  Rng rng(seed);
  Rng channel_rng = rng.split(0);
  std::vector<double> amplitude(static_cast<std::size_t>(channels));
  std::vector<double> offset(static_cast<std::size_t>(channels));
  std::vector<double> blend(static_cast<std::size_t>(channels));
  for (Index k = 0; k < channels; ++k) {
    amplitude[static_cast<std::size_t>(k)] = channel_rng.uniform(0.6, 1.4);
    offset[static_cast<std::size_t>(k)] = channel_rng.uniform(0.0, std::numbers::pi / 4.0);
    blend[static_cast<std::size_t>(k)] = channel_rng.uniform(0.3, 0.7);
  }

  Dataset d;
  d.values = Tensor({n, channels, length});
  d.observed = Tensor({n, channels, length}, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index i = 0; i < n; ++i) {
    Rng srng = rng.split(1).split(static_cast<std::uint64_t>(i));
    // Integer cycle counts keep each oscillator on a single DFT bin.
    const double f1 = double(1 + srng.below(5));
    const double f2 = double(1 + srng.below(5));
    const double phase1 = srng.uniform(0.0, two_pi);
    const double phase2 = srng.uniform(0.0, two_pi);
    const double scale = srng.uniform(0.8, 1.2);
    const double decay = srng.uniform(0.5, 3.0);
    for (Index k = 0; k < channels; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      for (Index t = 0; t < length; ++t) {
        const double u = double(t) / double(length);
        const double s1 = std::sin(two_pi * f1 * u + phase1 + offset[ks]);
        double v = 0.0;
        switch (kind) {
          case SynthKind::Sines:
            v = s1;
            break;
          case SynthKind::Damped:
            v = std::exp(-decay * u) * s1;
            break;
          case SynthKind::SquareMix: {
            const double square = s1 >= 0.0 ? 1.0 : -1.0;
            const double s2 = std::sin(two_pi * f2 * u + phase2 + offset[ks]);
            v = blend[ks] * square + (1.0 - blend[ks]) * s2;
            break;
          }
        }
        d.values(i, k, t) = scale * amplitude[ks] * v;
      }
    }
    if (noise_sd > 0.0) {
      for (Index k = 0; k < channels; ++k) {
        for (Index t = 0; t < length; ++t) d.values(i, k, t) += noise_sd * srng.normal();
      }
    }
  }
  assign_splits(d);
  return d;
}

Scaler Scaler::fit(const Dataset& d) {
  const auto train = d.indices(Split::Train);
  if (train.empty()) throw ConfigError("scaler: dataset has no training samples");
  const Index channels = d.channels(), length = d.length();
  Scaler s;
  s.mean = Eigen::VectorXd::Zero(channels);
  s.std = Eigen::VectorXd::Zero(channels);
  for (Index k = 0; k < channels; ++k) {
    double sum = 0.0, count = 0.0;
    for (Index i : train) {
      for (Index t = 0; t < length; ++t) {
        if (d.observed(i, k, t) > 0.5) {
          sum += d.values(i, k, t);
          count += 1.0;
        }
      }
    }
    if (count < 2.0) throw ConfigError("scaler: channel " + std::to_string(k) + " has fewer than two observations");
    const double mu = sum / count;
    double ss = 0.0;
    for (Index i : train) {
      for (Index t = 0; t < length; ++t) {
        if (d.observed(i, k, t) > 0.5) ss += (d.values(i, k, t) - mu) * (d.values(i, k, t) - mu);
      }
    }
    const double sd = std::sqrt(ss / count);
    if (!(sd > 0.0)) throw ConfigError("scaler: channel " + std::to_string(k) + " is constant");
    s.mean[k] = mu;
    s.std[k] = sd;
  }
  return s;
}

namespace {

template <typename F>
Tensor per_channel(const Tensor& x, Index channels, F f) {
  if (x.rank() < 2 || x.dim(x.rank() - 2) != channels) {
    throw DimensionError("scaler: tensor " + shape_string(x.shape()) + " does not have " + std::to_string(channels) +
                         " channels");
  }
  const Index length = x.dim(x.rank() - 1);
  Tensor out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = f(x[i], (i / length) % channels);
  return out;
}

}  // namespace

Tensor Scaler::apply(const Tensor& x) const {
  return per_channel(x, mean.size(), [this](double v, Index k) { return (v - mean[k]) / std[k]; });
}

Tensor Scaler::inverse(const Tensor& x) const {
  return per_channel(x, mean.size(), [this](double v, Index k) { return v * std[k] + mean[k]; });
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  d.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write dataset " + path.string());
  io::write_magic(os, kDatasetMagic);
  io::write_u64(os, static_cast<std::uint64_t>(d.samples()));
  io::write_u64(os, static_cast<std::uint64_t>(d.channels()));
  io::write_u64(os, static_cast<std::uint64_t>(d.length()));
  for (Split s : d.split) io::write_u8(os, static_cast<std::uint8_t>(s));
  for (double v : d.values.values()) io::write_f64(os, v);
  for (double v : d.observed.values()) io::write_f64(os, v);
  if (!os) throw ConfigError("failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset " + path.string());
  io::expect_magic(is, kDatasetMagic, "dataset " + path.string());
  const auto n = static_cast<Index>(io::read_u64(is));
  const auto k = static_cast<Index>(io::read_u64(is));
  const auto l = static_cast<Index>(io::read_u64(is));
  if (n < 1 || k < 1 || l < 1) throw ConfigError("dataset has empty dimensions");
  Dataset d;
  d.split.resize(static_cast<std::size_t>(n));
  for (auto& s : d.split) {
    const auto tag = io::read_u8(is);
    if (tag > 2) throw ConfigError("dataset: invalid split tag");
    s = static_cast<Split>(tag);
  }
  d.values = Tensor({n, k, l});
  d.observed = Tensor({n, k, l});
  for (double& v : d.values.values()) v = io::read_f64(is);
  for (double& v : d.observed.values()) v = io::read_f64(is);
  d.validate();
  return d;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open CSV " + path.string());
  std::map<std::tuple<Index, Index, Index>, std::pair<double, double>> entries;
  Index n = 0, k = 0, l = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.find("sample") != std::string::npos) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 4 || fields.size() > 5) {
      throw ConfigError("CSV line " + std::to_string(line_no) + ": expected sample,channel,t,value[,observed]");
    }
    try {
      const Index i = std::stoll(fields[0]), c = std::stoll(fields[1]), t = std::stoll(fields[2]);
      const double v = std::stod(fields[3]);
      const double present = fields.size() == 5 ? std::stod(fields[4]) : 1.0;
      if (i < 0 || c < 0 || t < 0) throw ConfigError("negative index");
      entries[{i, c, t}] = {v, present > 0.5 ? 1.0 : 0.0};
      n = std::max(n, i + 1);
      k = std::max(k, c + 1);
      l = std::max(l, t + 1);
    } catch (const std::exception& e) {
      throw ConfigError("CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (entries.empty()) throw ConfigError("CSV " + path.string() + " has no data rows");
  Dataset d;
  d.values = Tensor({n, k, l});
  d.observed = Tensor({n, k, l});
  for (const auto& [key, val] : entries) {
    const auto [i, c, t] = key;
    d.values(i, c, t) = val.second > 0.5 ? val.first : 0.0;
    d.observed(i, c, t) = val.second;
  }
  assign_splits(d);
  return d;
}

ChannelSplit channel_split(const Tensor& batch, Index width) {
  if (batch.rank() != 3) throw DimensionError("channel_split: expected (B, K, L)");
  if (width < 1) throw DomainError("channel_split: width must be >= 1");
  const Index channels = batch.dim(1);
  if (width > channels) {
    warn("channel_split: width " + std::to_string(width) + " exceeds channel count " + std::to_string(channels) +
         "; using a single group");
    width = channels;
  }
  ChannelSplit out;
  for (Index begin = 0; begin < channels; begin += width) {
    const Index end = std::min(begin + width, channels);
    Tensor g({batch.dim(0), end - begin, batch.dim(2)});
    for (Index b = 0; b < batch.dim(0); ++b) g.slice(b) = batch.slice(b).middleRows(begin, end - begin);
    out.groups.push_back(std::move(g));
    out.ranges.emplace_back(begin, end);
  }
  return out;
}

Tensor reassemble(const ChannelSplit& split) {
  if (split.groups.empty()) throw DimensionError("reassemble: no groups");
  const Index batch = split.groups.front().dim(0), length = split.groups.front().dim(2);
  const Index channels = split.ranges.back().second;
  Tensor out({batch, channels, length});
  for (std::size_t g = 0; g < split.groups.size(); ++g) {
    const auto [begin, end] = split.ranges[g];
    for (Index b = 0; b < batch; ++b) out.slice(b).middleRows(begin, end - begin) = split.groups[g].slice(b);
  }
  return out;
}

}  // namespace sssd::data
