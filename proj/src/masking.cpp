#include "sssd/masking.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace sssd::masking {

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::RM: return "RM";
    case Scenario::RBM: return "RBM";
    case Scenario::BM: return "BM";
    case Scenario::TF: return "TF";
  }
  return "?";
}

Scenario parse_scenario(const std::string& text) {
  if (text == "RM" || text == "rm") return Scenario::RM;
  if (text == "RBM" || text == "rbm") return Scenario::RBM;
  if (text == "BM" || text == "bm") return Scenario::BM;
  if (text == "TF" || text == "tf") return Scenario::TF;
  throw ConfigError("unknown missingness scenario '" + text + "' (expected RM, RBM, BM or TF)");
}

Index target_count(Index length, double ratio) {
  return static_cast<Index>(std::floor(ratio * double(length) + 1e-9));
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("missingness ratio must lie in (0, 1)");
}

void check_dims(Index length, Index channels) {
  if (length < 1 || channels < 1) throw DomainError("mask dimensions must be positive");
}

}  // namespace

std::vector<std::pair<Index, Index>> segments(Index length, double ratio) {
  check_ratio(ratio);
  const Index width = target_count(length, ratio);
  if (width < 1) throw DomainError("segment length floor(ratio * L) is zero");
  const Index count = length / width;
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < count; ++i) out.emplace_back(i * width, i + 1 == count ? length : (i + 1) * width);
  return out;
}

Tensor rm_mask(Index length, Index channels, double ratio, Rng& rng) {
  check_ratio(ratio);
  check_dims(length, channels);
  const Index zeros = target_count(length, ratio);
  if (zeros == 0) warn("rm_mask: floor(ratio * L) is zero; mask has no imputation targets");
  Tensor mask({channels, length}, 1.0);
  std::vector<Index> positions(static_cast<std::size_t>(length));
  for (Index k = 0; k < channels; ++k) {
    std::iota(positions.begin(), positions.end(), Index{0});
    // Partial Fisher-Yates: the first `zeros` entries are a uniform subset.
    for (Index i = 0; i < zeros; ++i) {
      const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(length - i)));
      std::swap(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
      mask(k, positions[static_cast<std::size_t>(i)]) = 0.0;
    }
  }
  return mask;
}

Tensor rbm_mask(Index length, Index channels, double ratio, Rng& rng) {
  check_dims(length, channels);
  const auto segs = segments(length, ratio);
  Tensor mask({channels, length}, 1.0);
  for (Index k = 0; k < channels; ++k) {
    const auto [begin, end] = segs[rng.below(segs.size())];
    for (Index t = begin; t < end; ++t) mask(k, t) = 0.0;
  }
  return mask;
}

Tensor bm_mask(Index length, Index channels, double ratio, Rng& rng) {
  check_dims(length, channels);
  const auto segs = segments(length, ratio);
  const auto [begin, end] = segs[rng.below(segs.size())];
  Tensor mask({channels, length}, 1.0);
  mask.matrix().middleCols(begin, end - begin).setZero();
  return mask;
}

Tensor tf_mask(Index length, Index channels, Index horizon) {
  check_dims(length, channels);
  if (horizon <= 0 || horizon >= length) throw DomainError("forecast horizon must lie in (0, L)");
  Tensor mask({channels, length}, 1.0);
  mask.matrix().rightCols(horizon).setZero();
  return mask;
}

Tensor compose(const Tensor& m_imp, const Tensor& m_mvi) {
  require_same_shape(m_imp.shape(), m_mvi.shape(), "compose");
  return Tensor(m_imp.shape(), (m_imp.array() * m_mvi.array()).eval());
}

void ScenarioSpec::validate(Index length) const {
  if (scenario == Scenario::TF) {
    if (horizon <= 0 || horizon >= length) throw ConfigError("TF horizon must lie in (0, L)");
    return;
  }
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("missingness ratio must lie in (0, 1)");
  if (scenario != Scenario::RM && target_count(length, ratio) < 1) {
    throw ConfigError("ratio too small: floor(ratio * L) is zero");
  }
}

Tensor ScenarioSpec::generate(Index length, Index channels, Rng& rng) const {
  switch (scenario) {
    case Scenario::RM: return rm_mask(length, channels, ratio, rng);
    case Scenario::RBM: return rbm_mask(length, channels, ratio, rng);
    case Scenario::BM: return bm_mask(length, channels, ratio, rng);
    case Scenario::TF: return tf_mask(length, channels, horizon);
  }
  throw ConfigError("unknown scenario");
}

std::string to_csv(const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("to_csv: expected a (K, L) mask");
  std::ostringstream os;
  for (Index k = 0; k < mask.dim(0); ++k) {
    for (Index t = 0; t < mask.dim(1); ++t) os << (t ? "," : "") << (mask(k, t) > 0.5 ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

}  // namespace sssd::masking
