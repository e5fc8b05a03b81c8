#include <doctest.h>

#include <cmath>

#include "sssd/metrics.hpp"
#include "support.hpp"

using namespace sssd;
using namespace sssd::metrics;

namespace {

struct LoopMetrics {
  double mae, mse, rmse, mre;
};

LoopMetrics loop_metrics(const Tensor& y, const Tensor& yhat, const Tensor& m_eval) {
  double abs_sum = 0.0, sq_sum = 0.0, target_sum = 0.0, n = 0.0;
  for (Index i = 0; i < y.dim(0); ++i) {
    for (Index j = 0; j < y.dim(1); ++j) {
      if (m_eval(i, j) == 0.0) continue;
      const double e = y(i, j) - yhat(i, j);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      target_sum += std::abs(y(i, j));
      n += 1.0;
    }
  }
  return {abs_sum / n, sq_sum / n, std::sqrt(sq_sum / n), abs_sum / target_sum};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand-computed values") {
  const Tensor y({1, 2}, {1.0, 2.0}), yhat({1, 2}, {1.0, 3.0});
  CHECK(masked_mae(y, yhat, Tensor({1, 2}, {1.0, 1.0})) == 0.5);
  CHECK(masked_mae(y, yhat, Tensor({1, 2}, {1.0, 0.0})) == 0.0);
  const Tensor z({1, 2}, {0.0, 0.0}), p({1, 2}, {3.0, 4.0}), ones({1, 2}, 1.0);
  CHECK(masked_mse(z, p, ones) == 12.5);
  CHECK(masked_rmse(z, p, ones) == doctest::Approx(3.5355339).epsilon(1e-7));
  CHECK(masked_mre(Tensor({1, 2}, {2.0, 2.0}), Tensor({1, 2}, {1.0, 3.0}), ones) == 0.5);
  CHECK(masked_mae(y, y, ones) == 0.0);
  CHECK(masked_mre(y, y, ones) == 0.0);
}

TEST_CASE("degenerate masks throw") {
  const Tensor y({1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(masked_mae(y, y, Tensor({1, 2}, 0.0)), DomainError);
  CHECK_THROWS_AS(masked_mre(y, Tensor({1, 2}, 1.0), Tensor({1, 2}, 1.0)), DomainError);
  CHECK_THROWS_AS(masked_mae(y, Tensor({2, 1}), Tensor({1, 2}, 1.0)), DimensionError);
  const auto report = evaluate(y, Tensor({1, 2}, 1.0), Tensor({1, 2}, 1.0));
  CHECK_FALSE(report.mre.has_value());
}

TEST_CASE("random grids against loop oracles") {
  Rng rng(61);
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor y = testing::random_tensor({8, 32}, rng), yhat = testing::random_tensor({8, 32}, rng);
    Tensor m = testing::random_mask({8, 32}, rng, 0.3);
    m[0] = 1.0;
    const auto ref = loop_metrics(y, yhat, m);
    CHECK(std::abs(masked_mae(y, yhat, m) - ref.mae) < 1e-12);
    CHECK(std::abs(masked_mse(y, yhat, m) - ref.mse) < 1e-12);
    CHECK(std::abs(masked_rmse(y, yhat, m) - ref.rmse) < 1e-12);
    CHECK(std::abs(masked_mre(y, yhat, m) - ref.mre) < 1e-12);
    CHECK(masked_mae(y, yhat, m) <= masked_rmse(y, yhat, m) + 1e-15);
    CHECK(std::abs(masked_rmse(y, yhat, m) * masked_rmse(y, yhat, m) - masked_mse(y, yhat, m)) < 1e-12);
  }
}

TEST_CASE("scale invariance of MRE") {
  Rng rng(62);
  const Tensor y = testing::random_tensor({4, 10}, rng), yhat = testing::random_tensor({4, 10}, rng);
  const Tensor m({4, 10}, 1.0);
  const Tensor ys(y.shape(), (3.5 * y.array()).eval()), yhats(y.shape(), (3.5 * yhat.array()).eval());
  CHECK(masked_mre(ys, yhats, m) == doctest::Approx(masked_mre(y, yhat, m)).epsilon(1e-14));
}

TEST_CASE("entries outside the evaluation mask are never read") {
  Rng rng(63);
  const Tensor y = testing::random_tensor({2, 3, 16}, rng), yhat = testing::random_tensor({2, 3, 16}, rng);
  const Tensor m_imp = testing::random_mask({2, 3, 16}, rng, 0.6), m_mvi = testing::random_mask({2, 3, 16}, rng, 0.8);
  const Tensor m_eval = eval_mask(m_imp, m_mvi);
  for (Index i = 0; i < m_eval.size(); ++i) CHECK(m_eval[i] == m_mvi[i] * (1.0 - m_imp[i]));
  const auto before = evaluate(y, yhat, m_eval);
  Tensor perturbed = yhat;
  for (Index i = 0; i < perturbed.size(); ++i) {
    if (m_eval[i] == 0.0) perturbed[i] += 1e3 * rng.normal();
  }
  const auto after = evaluate(y, perturbed, m_eval);
  CHECK(after.mae == before.mae);
  CHECK(after.mse == before.mse);
  CHECK(*after.mre == *before.mre);
}

TEST_CASE("per-channel reports partition the evaluated entries") {
  Rng rng(64);
  const Tensor y = testing::random_tensor({3, 4, 12}, rng), yhat = testing::random_tensor({3, 4, 12}, rng);
  const Tensor m = testing::random_mask({3, 4, 12}, rng, 0.5);
  const auto report = evaluate(y, yhat, m);
  REQUIRE(report.per_channel.size() == 4);
  Index total = 0;
  double weighted = 0.0;
  for (const auto& ch : report.per_channel) {
    total += ch.n_eval;
    weighted += ch.mae * double(ch.n_eval);
  }
  CHECK(total == report.n_eval);
  CHECK(weighted / double(total) == doctest::Approx(report.mae).epsilon(1e-13));
  CHECK(report.to_json().find("\"mae\"") != std::string::npos);
}

TEST_CASE("averaging reports over draws") {
  Rng rng(65);
  const Tensor y = testing::random_tensor({2, 2, 8}, rng);
  const Tensor m = testing::random_mask({2, 2, 8}, rng, 0.5);
  std::vector<EvalReport> reports;
  double mae = 0.0, mse = 0.0;
  for (int s = 0; s < 4; ++s) {
    reports.push_back(evaluate(y, testing::random_tensor({2, 2, 8}, rng), m));
    mae += reports.back().mae / 4.0;
    mse += reports.back().mse / 4.0;
  }
  const auto avg = average(reports);
  CHECK(avg.mae == doctest::Approx(mae).epsilon(1e-14));
  CHECK(avg.mse == doctest::Approx(mse).epsilon(1e-14));
  CHECK(avg.n_eval == reports[0].n_eval);
}

}
