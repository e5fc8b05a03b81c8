#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sssd/tensor.hpp"

namespace sssd::metrics {

// m_eval = m_mvi * (1 - m_imp): held-out entries that have ground truth.
Tensor eval_mask(const Tensor& m_imp, const Tensor& m_mvi);

// All metrics normalize by the number of evaluated entries and throw
// DomainError when that number (or, for MRE, the target mass) is zero.
double masked_mae(const Tensor& y, const Tensor& yhat, const Tensor& m_eval);
double masked_mse(const Tensor& y, const Tensor& yhat, const Tensor& m_eval);
double masked_rmse(const Tensor& y, const Tensor& yhat, const Tensor& m_eval);
// Aggregate relative error: sum |y - yhat| / sum |y| over evaluated entries.
double masked_mre(const Tensor& y, const Tensor& yhat, const Tensor& m_eval);

struct ChannelReport {
  Index channel = 0;
  Index n_eval = 0;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  std::optional<double> mre;
};

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  std::optional<double> mre;  // empty when the evaluated target mass is zero
  Index n_eval = 0;
  std::vector<ChannelReport> per_channel;

  std::string to_json(int indent = 2) const;
};

// Tensors shaped (..., K, L); channels are the second-to-last axis.
EvalReport evaluate(const Tensor& y, const Tensor& yhat, const Tensor& m_eval);

// Entry-weighted average of reports with equal n_eval (e.g. over sample draws).
EvalReport average(const std::vector<EvalReport>& reports);

}  // namespace sssd::metrics
