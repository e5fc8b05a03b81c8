#include <doctest.h>

#include <cmath>

#include "sssd/ops.hpp"
#include "sssd/s4.hpp"
#include "sssd/s4_layer.hpp"
#include "support.hpp"

using namespace sssd;

namespace {

s4::ContinuousSsm<double> random_system(Index n, Rng& rng) {
  s4::ContinuousSsm<double> ssm;
  ssm.a = s4::hippo_legs<double>(n);
  ssm.b = s4::hippo_legs_input<double>(n);
  ssm.c = Eigen::RowVectorXd(n);
  for (Index i = 0; i < n; ++i) ssm.c[i] = rng.normal() / std::sqrt(double(n));
  ssm.d = rng.normal();
  return ssm;
}

// Kernel through explicit matrix powers, independent of the propagation loop.
Eigen::VectorXd power_kernel(const s4::DiscreteSsm<double>& d, Index length) {
  Eigen::VectorXd k(length);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(d.a_bar.rows(), d.a_bar.cols());
  for (Index i = 0; i < length; ++i) {
    k[i] = (d.c_bar * power * d.b_bar)(0, 0);
    power = power * d.a_bar;
  }
  return k;
}

}  // namespace

TEST_SUITE("s4") {

TEST_CASE("HiPPO-LegS entries follow the piecewise definition") {
  const auto a = s4::hippo_legs<double>(8);
  for (Index n = 0; n < 8; ++n) {
    for (Index k = 0; k < 8; ++k) {
      double expected = 0.0;
      if (n > k) expected = -std::sqrt(2.0 * n + 1.0) * std::sqrt(2.0 * k + 1.0);
      if (n == k) expected = -(n + 1.0);
      CHECK(a(n, k) == expected);
    }
  }
  const auto a2 = s4::hippo_legs<double>(2);
  CHECK(a2(0, 0) == -1.0);
  CHECK(a2(0, 1) == 0.0);
  CHECK(a2(1, 0) == -std::sqrt(3.0));
  CHECK(a2(1, 1) == -2.0);
  CHECK_THROWS_AS(s4::hippo_legs<double>(0), DomainError);
}

TEST_CASE("HiPPO is templated on the scalar type") {
  const auto af = s4::hippo_legs<float>(4);
  const auto al = s4::hippo_legs<long double>(4);
  CHECK(af(3, 1) == doctest::Approx(double(al(3, 1))).epsilon(1e-6));
}

TEST_CASE("bilinear discretization of a scalar system") {
  s4::ContinuousSsm<double> ssm{Eigen::MatrixXd::Constant(1, 1, -2.0), Eigen::VectorXd::Constant(1, 3.0),
                                Eigen::RowVectorXd::Constant(1, 1.0), 0.0};
  const double delta = 0.1;
  const auto d = s4::discretize_bilinear(ssm, delta);
  CHECK(d.a_bar(0, 0) == doctest::Approx((1.0 - 0.1) / (1.0 + 0.1)).epsilon(1e-15));
  CHECK(d.b_bar[0] == doctest::Approx(0.3 / 1.1).epsilon(1e-15));
  CHECK_THROWS_AS(s4::discretize_bilinear(ssm, 0.0), DomainError);
}

TEST_CASE("singular discretization is reported") {
  // I - delta/2 A = 0 when A = 2/delta.
  s4::ContinuousSsm<double> ssm{Eigen::MatrixXd::Constant(1, 1, 20.0), Eigen::VectorXd::Constant(1, 1.0),
                                Eigen::RowVectorXd::Constant(1, 1.0), 0.0};
  CHECK_THROWS_AS(s4::discretize_bilinear(ssm, 0.1), NumericError);
}

TEST_CASE("discretized HiPPO is stable") {
  for (double delta : {1e-3, 1e-2, 1e-1, 1.0}) {
    s4::ContinuousSsm<double> ssm{s4::hippo_legs<double>(16), s4::hippo_legs_input<double>(16),
                                  Eigen::RowVectorXd::Ones(16), 0.0};
    const auto d = s4::discretize_bilinear(ssm, delta);
    const Eigen::VectorXcd eig = d.a_bar.eigenvalues();
    CHECK(eig.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("kernel equals the matrix-power definition") {
  Rng rng(21);
  for (Index n : {1, 4, 16}) {
    auto ssm = random_system(n, rng);
    const auto d = s4::discretize_bilinear(ssm, 0.05);
    const auto k = s4::materialize_kernel(d, 40);
    const auto ref = power_kernel(d, 40);
    CHECK((k - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("convolutional and recurrent evaluation agree") {
  Rng rng(22);
  for (Index n : {2, 8, 64}) {
    for (Index length : {16, 128}) {
      for (int rep = 0; rep < 4; ++rep) {
        auto ssm = random_system(n, rng);
        const double delta = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        const auto d = s4::discretize_bilinear(ssm, delta);
        std::vector<double> u(static_cast<std::size_t>(length));
        for (double& v : u) v = rng.normal();
        const auto k = s4::materialize_kernel(d, length);
        const auto y_conv = s4::apply_convolutional({k.data(), std::size_t(length)}, u, ssm.d);
        const auto y_rec = s4::apply_recurrent<double>(d, u, ssm.d);
        CHECK((y_conv - y_rec).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
}

TEST_CASE("apply_convolutional rejects mismatched lengths") {
  std::vector<double> k(8, 1.0), u(6, 1.0);
  CHECK_THROWS_AS(s4::apply_convolutional(k, u, 0.0), DimensionError);
}

TEST_CASE("ssm_kernel forward matches the standalone kernel") {
  Rng rng(23);
  const Index heads = 3, n = 6, length = 20;
  const auto a = s4::hippo_legs<double>(n);
  const auto b = s4::hippo_legs_input<double>(n);
  const Tensor c = testing::random_tensor({heads, n}, rng);
  const Tensor logd({heads}, {std::log(0.01), std::log(0.05), std::log(0.2)});
  ad::Tape tape(false);
  const Tensor k = s4::ssm_kernel(tape.constant(c), tape.constant(logd), a, b, length).value();
  for (Index h = 0; h < heads; ++h) {
    s4::ContinuousSsm<double> ssm{a, b, Eigen::Map<const Eigen::RowVectorXd>(c.data() + h * n, n), 0.0};
    const auto ref = s4::materialize_kernel(s4::discretize_bilinear(ssm, std::exp(logd[h])), length);
    for (Index i = 0; i < length; ++i) CHECK(std::abs(k(h, i) - ref[i]) < 1e-12);
  }
}

TEST_CASE("ssm_kernel gradients for C and the log step") {
  Rng rng(24);
  const Index heads = 2, n = 5, length = 12;
  const auto a = s4::hippo_legs<double>(n);
  const auto b = s4::hippo_legs_input<double>(n);
  const Tensor w = testing::random_tensor({heads, length}, rng);
  auto f = [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
    return ad::sum(ad::mul(s4::ssm_kernel(v[0], v[1], a, b, length), tape.constant(w)));
  };
  const auto cmp = testing::compare_gradients(
      f, {testing::random_tensor({heads, n}, rng), Tensor({heads}, {std::log(0.03), std::log(0.3)})});
  CHECK(testing::max_relative_error(cmp.analytic[0], cmp.numeric[0], 1e-6) < 1e-6);
  CHECK(testing::max_relative_error(cmp.analytic[1], cmp.numeric[1], 1e-6) < 1e-6);
}

TEST_CASE("S4 layer: shape, causality and parameter gradients") {
  Rng rng(25);
  for (bool bidirectional : {false, true}) {
    CAPTURE(bidirectional);
    s4::S4LayerConfig cfg{3, 4, bidirectional, 1e-3, 1e-1};
    s4::S4Layer layer("s4", cfg, rng);
    const Tensor x = testing::random_tensor({2, 3, 10}, rng);
    const Tensor w = testing::random_tensor({2, 3, 10}, rng);
    {
      ad::Tape tape(false);
      CHECK(layer.forward(tape, tape.constant(x)).shape() == Shape{2, 3, 10});
    }
    std::vector<ad::Parameter*> params;
    layer.collect(params);
    CHECK(params.size() == (bidirectional ? 10u : 5u));
    auto loss = [&] {
      ad::Tape tape(false);
      return ad::sum(ad::mul(layer.forward(tape, tape.constant(x)), tape.constant(w))).value()[0];
    };
    {
      ad::Tape tape;
      for (auto* p : params) p->zero_grad();
      tape.backward(ad::sum(ad::mul(layer.forward(tape, tape.constant(x)), tape.constant(w))));
    }
    for (auto* p : params) {
      CAPTURE(p->name);
      const Tensor analytic = p->grad;
      const Tensor numeric = testing::numeric_gradient(loss, p->value, 1e-5);
      CHECK(testing::max_relative_error(analytic, numeric, 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("unidirectional S4 layer is causal in time") {
  Rng rng(26);
  s4::S4Layer layer("s4", {2, 4, false, 1e-3, 1e-1}, rng);
  Tensor x = testing::random_tensor({1, 2, 16}, rng);
  ad::Tape t1(false);
  const Tensor y1 = layer.forward(t1, t1.constant(x)).value();
  for (Index c = 0; c < 2; ++c) x(0, c, 15) += 3.0;
  ad::Tape t2(false);
  const Tensor y2 = layer.forward(t2, t2.constant(x)).value();
  for (Index c = 0; c < 2; ++c) {
    for (Index t = 0; t < 15; ++t) CHECK(std::abs(y1(0, c, t) - y2(0, c, t)) < 1e-12);
  }
}

}
