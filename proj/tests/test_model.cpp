#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sssd/checkpoint.hpp"
#include "sssd/diffusion.hpp"
#include "sssd/model.hpp"
#include "sssd/ops.hpp"
#include "support.hpp"

using namespace sssd;
using namespace sssd::model;

namespace {

double forward_sum(SssdModel& m, const Tensor& x, const std::vector<int>& steps, const Tensor& cond, const Tensor& w) {
  ad::Tape tape(false);
  return ad::sum(ad::mul(m.forward(tape, x, steps, cond), tape.constant(w))).value()[0];
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("step encoding") {
  const std::vector<int> steps{0, 7};
  const Tensor e = sinusoidal_encoding(steps, 8);
  CHECK(e.shape() == Shape{2, 8});
  for (Index j = 0; j < 4; ++j) {
    const double f = std::pow(10000.0, -double(j) / 3.0);
    CHECK(e(0, j) == 0.0);
    CHECK(e(0, 4 + j) == 1.0);
    CHECK(e(1, j) == doctest::Approx(std::sin(7.0 * f)).epsilon(1e-14));
    CHECK(e(1, 4 + j) == doctest::Approx(std::cos(7.0 * f)).epsilon(1e-14));
  }
}

TEST_CASE("parameter count") {
  // Hand count for the tiny config: input 24, embedding 144 + 272, two blocks of
  // 1504, skip projection 72, final projection 18.
  SssdModel m(testing::tiny_config(), 1);
  CHECK(m.parameter_count() == 3538);
  CHECK(count_parameters(testing::tiny_config()) == 3538);
  for (bool bidir : {false, true}) {
    for (bool second : {false, true}) {
      auto c = ModelConfig::desk(3, 32);
      c.bidirectional = bidir;
      c.second_s4 = second;
      SssdModel d(c, 2);
      CHECK(d.parameter_count() == count_parameters(c));
    }
  }
  CHECK(count_parameters(ModelConfig::reference(12, 1000)) > 40'000'000);
}

TEST_CASE("fresh model outputs zeros and has the input shape") {
  Rng rng(71);
  SssdModel m(testing::tiny_config(), 3);
  ad::Tape tape(false);
  const Tensor x = testing::random_tensor({3, 2, 16}, rng), c = testing::random_tensor({3, 4, 16}, rng);
  const std::vector<int> steps{0, 5, 9};
  const Tensor y = m.forward(tape, x, steps, c).value();
  CHECK(y.shape() == x.shape());
  CHECK(y.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("input validation") {
  SssdModel m(testing::tiny_config(), 3);
  ad::Tape tape(false);
  const std::vector<int> one{0};
  CHECK_THROWS_AS(m.forward(tape, Tensor({1, 3, 16}), one, Tensor({1, 6, 16})), DimensionError);
  CHECK_THROWS_AS(m.forward(tape, Tensor({1, 2, 16}), one, Tensor({1, 4, 8})), DimensionError);
  const std::vector<int> two{0, 1};
  CHECK_THROWS_AS(m.forward(tape, Tensor({1, 2, 16}), two, Tensor({1, 4, 16})), DimensionError);
  auto bad = testing::tiny_config();
  bad.residual_channels = 0;
  CHECK_THROWS(SssdModel(bad, 1));
}

TEST_CASE("same seed, same weights") {
  SssdModel a(testing::tiny_config(), 9), b(testing::tiny_config(), 9), c(testing::tiny_config(), 10);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK((pa[i]->value.array() == pb[i]->value.array()).all());
    differs = differs || !(pa[i]->value.array() == pc[i]->value.array()).all();
  }
  CHECK(differs);
}

TEST_CASE("output responds to the conditioning, the step and the input") {
  Rng rng(72);
  SssdModel m(testing::tiny_config(), 4);
  testing::perturb_parameters(m, 5);
  const Tensor x = testing::random_tensor({1, 2, 16}, rng), c = testing::random_tensor({1, 4, 16}, rng);
  const Tensor w = testing::random_tensor({1, 2, 16}, rng);
  const std::vector<int> s3{3}, s8{8};
  const double base = forward_sum(m, x, s3, c, w);
  Tensor c2 = c;
  c2(0, 1, 4) += 1.0;
  Tensor x2 = x;
  x2(0, 0, 9) += 1.0;
  CHECK(forward_sum(m, x, s3, c2, w) != base);
  CHECK(forward_sum(m, x2, s3, c, w) != base);
  CHECK(forward_sum(m, x, s8, c, w) != base);
}

TEST_CASE("gradients of every parameter group match finite differences") {
  Rng rng(73);
  SssdModel m(testing::tiny_config(), 6);
  testing::perturb_parameters(m, 7);
  const Tensor x = testing::random_tensor({2, 2, 16}, rng), c = testing::random_tensor({2, 4, 16}, rng);
  const Tensor w = testing::random_tensor({2, 2, 16}, rng);
  const std::vector<int> steps{1, 6};
  {
    ad::Tape tape;
    for (auto* p : m.parameters()) p->zero_grad();
    tape.backward(ad::sum(ad::mul(m.forward(tape, x, steps, c), tape.constant(w))));
  }
  auto f = [&] { return forward_sum(m, x, steps, c, w); };
  // A sample of groups here; the acceptance suite sweeps all of them.
  for (auto* p : m.parameters()) {
    if (!(p->name.starts_with("block1") || p->name.starts_with("embed") || p->name.starts_with("output"))) continue;
    CAPTURE(p->name);
    const Tensor numeric = testing::numeric_gradient(f, p->value, 1e-5);
    CHECK(testing::max_relative_error(p->grad, numeric, 1e-6) < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(74);
  const auto dir = testing::scratch_dir("ckpt");
  SssdModel m(testing::tiny_config(), 11);
  testing::perturb_parameters(m, 12);
  CheckpointMeta meta;
  meta.diffusion.steps = 17;
  meta.diffusion.mode = diffusion::Mode::D0;
  meta.channel_split_width = 5;
  meta.scaler.mean = Eigen::VectorXd::Constant(2, 0.25);
  meta.scaler.std = Eigen::VectorXd::Constant(2, 1.5);
  save_checkpoint(dir / "a.bin", m, meta);
  const Checkpoint ck = read_checkpoint(dir / "a.bin");
  CHECK(ck.config == m.config());
  CHECK(ck.meta.diffusion.steps == 17);
  CHECK(ck.meta.diffusion.mode == diffusion::Mode::D0);
  CHECK(ck.meta.channel_split_width == 5);
  CHECK(ck.meta.scaler.std[1] == 1.5);
  auto loaded = instantiate(ck);
  const auto pa = m.parameters(), pb = loaded->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK((pa[i]->value.array() == pb[i]->value.array()).all());
  save_checkpoint(dir / "b.bin", *loaded, ck.meta);
  CHECK(testing::read_file(dir / "a.bin") == testing::read_file(dir / "b.bin"));

  const Tensor x = testing::random_tensor({1, 2, 16}, rng), c = testing::random_tensor({1, 4, 16}, rng);
  const std::vector<int> steps{3};
  ad::Tape t1(false), t2(false);
  CHECK((m.forward(t1, x, steps, c).value().array() == loaded->forward(t2, x, steps, c).value().array()).all());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = testing::scratch_dir("ckpt_bad");
  SssdModel m(testing::tiny_config(), 11);
  CheckpointMeta meta;
  meta.scaler.mean = Eigen::VectorXd::Zero(2);
  meta.scaler.std = Eigen::VectorXd::Ones(2);
  save_checkpoint(dir / "a.bin", m, meta);
  const std::string bytes = testing::read_file(dir / "a.bin");
  std::ofstream(dir / "trailing.bin", std::ios::binary) << bytes << 'x';
  CHECK_THROWS(read_checkpoint(dir / "trailing.bin"));
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS(read_checkpoint(dir / "short.bin"));
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::ofstream(dir / "magic.bin", std::ios::binary) << wrong;
  CHECK_THROWS(read_checkpoint(dir / "magic.bin"));
  CHECK_THROWS(read_checkpoint(dir / "missing.bin"));
}

}
