#include "sssd/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace sssd::metrics {

namespace {

struct Sums {
  double abs_err = 0.0;
  double sq_err = 0.0;
  double abs_target = 0.0;
  Index count = 0;
};

void check(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  require_same_shape(y.shape(), yhat.shape(), "metrics");
  require_same_shape(y.shape(), m_eval.shape(), "metrics");
}

Sums accumulate(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  check(y, yhat, m_eval);
  Sums s;
  for (Index i = 0; i < y.size(); ++i) {
    if (m_eval[i] <= 0.5) continue;
    const double e = y[i] - yhat[i];
    s.abs_err += std::abs(e);
    s.sq_err += e * e;
    s.abs_target += std::abs(y[i]);
    ++s.count;
  }
  return s;
}

void require_entries(const Sums& s) {
  if (s.count == 0) throw DomainError("metric undefined: evaluation mask selects no entries");
}

}  // namespace

Tensor eval_mask(const Tensor& m_imp, const Tensor& m_mvi) {
  require_same_shape(m_imp.shape(), m_mvi.shape(), "eval_mask");
  return Tensor(m_imp.shape(), (m_mvi.array() * (1.0 - m_imp.array())).eval());
}

double masked_mae(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  const Sums s = accumulate(y, yhat, m_eval);
  require_entries(s);
  return s.abs_err / double(s.count);
}

double masked_mse(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  const Sums s = accumulate(y, yhat, m_eval);
  require_entries(s);
  return s.sq_err / double(s.count);
}

double masked_rmse(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  return std::sqrt(masked_mse(y, yhat, m_eval));
}

double masked_mre(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  const Sums s = accumulate(y, yhat, m_eval);
  require_entries(s);
  if (s.abs_target == 0.0) throw DomainError("MRE undefined: evaluated targets are all zero");
  return s.abs_err / s.abs_target;
}

EvalReport evaluate(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  check(y, yhat, m_eval);
  if (y.rank() < 2) throw DimensionError("evaluate: expected tensors shaped (..., K, L)");
  const Index channels = y.dim(y.rank() - 2);
  const Index length = y.dim(y.rank() - 1);
  std::vector<Sums> per(static_cast<std::size_t>(channels));
  Sums total;
  for (Index i = 0; i < y.size(); ++i) {
    if (m_eval[i] <= 0.5) continue;
    Sums& s = per[static_cast<std::size_t>((i / length) % channels)];
    const double e = y[i] - yhat[i];
    for (Sums* acc : {&s, &total}) {
      acc->abs_err += std::abs(e);
      acc->sq_err += e * e;
      acc->abs_target += std::abs(y[i]);
      ++acc->count;
    }
  }
  require_entries(total);
  EvalReport r;
  r.n_eval = total.count;
  r.mae = total.abs_err / double(total.count);
  r.mse = total.sq_err / double(total.count);
  r.rmse = std::sqrt(r.mse);
  if (total.abs_target > 0.0) r.mre = total.abs_err / total.abs_target;
  for (Index k = 0; k < channels; ++k) {
    const Sums& s = per[static_cast<std::size_t>(k)];
    ChannelReport c;
    c.channel = k;
    c.n_eval = s.count;
    if (s.count > 0) {
      c.mae = s.abs_err / double(s.count);
      c.mse = s.sq_err / double(s.count);
      c.rmse = std::sqrt(c.mse);
      if (s.abs_target > 0.0) c.mre = s.abs_err / s.abs_target;
    }
    r.per_channel.push_back(c);
  }
  return r;
}

EvalReport average(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw DomainError("average: no reports");
  EvalReport out = reports.front();
  const double n = double(reports.size());
  auto mean_of = [&](auto get) {
    double s = 0.0;
    for (const auto& r : reports) s += get(r);
    return s / n;
  };
  out.mae = mean_of([](const EvalReport& r) { return r.mae; });
  out.mse = mean_of([](const EvalReport& r) { return r.mse; });
  out.rmse = mean_of([](const EvalReport& r) { return r.rmse; });
  bool have_mre = true;
  for (const auto& r : reports) have_mre = have_mre && r.mre.has_value();
  out.mre = have_mre ? std::optional<double>(mean_of([](const EvalReport& r) { return *r.mre; })) : std::nullopt;
  for (std::size_t k = 0; k < out.per_channel.size(); ++k) {
    auto& c = out.per_channel[k];
    c.mae = mean_of([k](const EvalReport& r) { return r.per_channel[k].mae; });
    c.mse = mean_of([k](const EvalReport& r) { return r.per_channel[k].mse; });
    c.rmse = mean_of([k](const EvalReport& r) { return r.per_channel[k].rmse; });
    bool all = true;
    for (const auto& r : reports) all = all && r.per_channel[k].mre.has_value();
    c.mre = all ? std::optional<double>(mean_of([k](const EvalReport& r) { return *r.per_channel[k].mre; }))
                : std::nullopt;
  }
  return out;
}

std::string EvalReport::to_json(int indent) const {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json channels = json::array();
  for (const auto& c : per_channel) {
    channels.push_back({{"channel", c.channel},
                        {"n_eval", c.n_eval},
                        {"mae", c.mae},
                        {"mse", c.mse},
                        {"rmse", c.rmse},
                        {"mre", opt(c.mre)}});
  }
  json j = {{"mae", mae}, {"mse", mse}, {"rmse", rmse}, {"mre", opt(mre)}, {"n_eval", n_eval}, {"per_channel", channels}};
  return j.dump(indent);
}

}  // namespace sssd::metrics
