#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sssd/rng.hpp"

// Imputation masks are (K, L) tensors of 0/1 values: 1 marks an entry the
// model conditions on, 0 an imputation target.
namespace sssd::masking {

enum class Scenario { RM, RBM, BM, TF };

std::string to_string(Scenario scenario);
Scenario parse_scenario(const std::string& text);

// floor(ratio * length), robust to representation error in ratio.
Index target_count(Index length, double ratio);

// Consecutive [begin, end) segments of length floor(ratio * L); the last
// segment absorbs the remainder.
std::vector<std::pair<Index, Index>> segments(Index length, double ratio);

// Random missing: exactly floor(ratio * L) distinct zeros per channel.
Tensor rm_mask(Index length, Index channels, double ratio, Rng& rng);
// Random block missing: one segment zeroed per channel, chosen independently.
Tensor rbm_mask(Index length, Index channels, double ratio, Rng& rng);
// Blackout missing: one segment zeroed across all channels.
Tensor bm_mask(Index length, Index channels, double ratio, Rng& rng);
// Forecasting: the final `horizon` steps zeroed in every channel.
Tensor tf_mask(Index length, Index channels, Index horizon);

// Pointwise product of an imputation mask and a missing-value mask.
Tensor compose(const Tensor& m_imp, const Tensor& m_mvi);

struct ScenarioSpec {
  Scenario scenario = Scenario::RM;
  double ratio = 0.2;
  Index horizon = 0;

  Tensor generate(Index length, Index channels, Rng& rng) const;
  void validate(Index length) const;
};

// K rows of L comma-separated 0/1 integers.
std::string to_csv(const Tensor& mask);

}  // namespace sssd::masking
