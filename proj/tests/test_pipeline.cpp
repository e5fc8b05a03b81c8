#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "sssd/checkpoint.hpp"
#include "sssd/config.hpp"
#include "sssd/dataset.hpp"
#include "sssd/fft.hpp"
#include "sssd/pipeline.hpp"
#include "support.hpp"

using namespace sssd;

namespace {

RunConfig small_run(long iterations = 6) {
  RunConfig c;
  c.model.residual_layers = 2;
  c.model.residual_channels = 8;
  c.model.skip_channels = 8;
  c.model.embed_dims = {8, 16, 16};
  c.model.state_dim = 4;
  c.diffusion.steps = 10;
  c.training.iterations = iterations;
  c.training.batch_size = 4;
  c.training.seed = 5;
  c.sampling.samples = 3;
  c.sampling.batch_rows = 5;
  return c;
}

data::Dataset small_data(std::uint64_t seed = 3) {
  return data::synth_dataset(data::SynthKind::Sines, 20, 3, 16, 0.05, seed);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SSSD_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("row packing round trips") {
  Rng rng(81);
  for (auto [k, w] : std::vector<std::pair<Index, Index>>{{370, 37}, {5, 2}, {3, 8}, {4, 0}}) {
    CAPTURE(k);
    CAPTURE(w);
    const Tensor x = testing::random_tensor({2, k, 6}, rng);
    const Tensor m = testing::random_mask({2, k, 6}, rng, 0.7);
    const auto rows = pipeline::pack_rows(x, m, w);
    const Index width = w == 0 || w > k ? k : w;
    CHECK(rows.width == width);
    CHECK(rows.groups == (k + width - 1) / width);
    CHECK(rows.values.shape() == Shape{2 * rows.groups, width, 6});
    // Packed values are standardized by the caller; here they only move.
    const Tensor back = pipeline::unpack_rows(rows.observed, rows.groups, k);
    CHECK((back.array() == m.array()).all());
    const Tensor pm = pipeline::pack_mask(m, w);
    CHECK((pipeline::unpack_rows(pm, rows.groups, k).array() == m.array()).all());
  }
  const auto rows = pipeline::pack_rows(Tensor({1, 370, 4}, 1.0), Tensor({1, 370, 4}, 1.0), 37);
  CHECK(rows.groups == 10);
}

TEST_CASE("channel split and reassembly") {
  Rng rng(82);
  const Tensor x = testing::random_tensor({3, 7, 5}, rng);
  const auto split = data::channel_split(x, 3);
  REQUIRE(split.groups.size() == 3);
  CHECK(split.groups[2].dim(1) == 1);
  CHECK(split.ranges[2] == std::pair<Index, Index>{6, 7});
  CHECK((data::reassemble(split).array() == x.array()).all());
}

TEST_CASE("scaler standardizes the training split and inverts") {
  auto d = small_data();
  const auto s = data::Scaler::fit(d);
  const Tensor z = s.apply(d.values);
  const auto train = d.indices(data::Split::Train);
  for (Index k = 0; k < d.channels(); ++k) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (Index i : train) {
      for (Index t = 0; t < d.length(); ++t) {
        if (d.observed(i, k, t) < 0.5) continue;
        sum += z(i, k, t);
        sq += z(i, k, t) * z(i, k, t);
        n += 1.0;
      }
    }
    CHECK(std::abs(sum / n) < 1e-12);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
  }
  CHECK(testing::max_abs_diff(s.inverse(z), d.values) < 1e-12);
}

TEST_CASE("synthetic sines") {
  const auto a = data::synth_dataset(data::SynthKind::Sines, 30, 4, 128, 0.0, 7);
  const auto b = data::synth_dataset(data::SynthKind::Sines, 30, 4, 128, 0.0, 7);
  const auto c = data::synth_dataset(data::SynthKind::Sines, 30, 4, 128, 0.0, 8);
  CHECK((a.values.array() == b.values.array()).all());
  CHECK(!(a.values.array() == c.values.array()).all());
  CHECK(a.split.size() == 30);

  // Noise-free channels concentrate their power in one frequency bin.
  const fft::RealFft plan(128);
  std::vector<double> row(128);
  std::vector<fft::Complex> spec(65);
  for (Index k = 0; k < 4; ++k) {
    for (Index t = 0; t < 128; ++t) row[t] = a.values(0, k, t);
    plan.forward(row.data(), spec.data());
    double total = 0.0, peak = 0.0;
    for (std::size_t j = 1; j < spec.size(); ++j) {
      total += std::norm(spec[j]);
      peak = std::max(peak, std::norm(spec[j]));
    }
    CHECK(peak / total > 0.5);
  }

  // Channels of one sample share their oscillator.
  Eigen::MatrixXd m(4, 128);
  for (Index k = 0; k < 4; ++k)
    for (Index t = 0; t < 128; ++t) m(k, t) = a.values(0, k, t);
  m = m.colwise() - m.rowwise().mean();
  const Eigen::VectorXd norms = m.rowwise().norm();
  const Eigen::MatrixXd corr = (m * m.transpose()).array() / (norms * norms.transpose()).array();
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(corr(i, j) > 0.5);
}

TEST_CASE("dataset and sample files round trip") {
  const auto dir = testing::scratch_dir("files");
  auto d = data::synth_dataset(data::SynthKind::Damped, 10, 2, 12, 0.1, 9);
  d.observed(3, 1, 4) = 0.0;
  data::save_dataset(dir / "d.bin", d);
  const auto e = data::load_dataset(dir / "d.bin");
  CHECK((e.values.array() == d.values.array()).all());
  CHECK((e.observed.array() == d.observed.array()).all());
  CHECK(e.split == d.split);

  Rng rng(83);
  const std::vector<Tensor> draws{testing::random_tensor({2, 3, 4}, rng), testing::random_tensor({2, 3, 4}, rng)};
  pipeline::save_samples(dir / "s.bin", draws);
  const auto back = pipeline::load_samples(dir / "s.bin");
  REQUIRE(back.size() == 2);
  CHECK((back[1].array() == draws[1].array()).all());

  std::ofstream(dir / "d.csv") << "sample,channel,t,value\n0,0,0,1.5\n0,1,2,-2\n1,0,1,3\n";
  const auto csv = data::load_csv(dir / "d.csv");
  CHECK(csv.values.shape() == Shape{2, 2, 3});
  CHECK(csv.values(0, 1, 2) == -2.0);
  CHECK(csv.observed(0, 1, 2) == 1.0);
  CHECK(csv.observed(1, 1, 1) == 0.0);
  CHECK(csv.observed.array().sum() == 3.0);
}

TEST_CASE("run config JSON round trip") {
  auto c = small_run();
  c.train_scenario = {masking::Scenario::BM, 0.3, 0};
  c.eval_scenario = {masking::Scenario::TF, 0.0, 4};
  c.diffusion.mode = diffusion::Mode::D0;
  c.diffusion.target = diffusion::Target::X0;
  c.model.second_s4 = false;
  c.sampling.quantiles = {0.1, 0.9};
  c.channel_split_width = 2;
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.eval_scenario.horizon == 4);
  CHECK(back.diffusion.target == diffusion::Target::X0);
  CHECK_THROWS_AS(RunConfig::from_json("{\"diffusion\": {\"mode\": \"D7\"}}"), ConfigError);
  CHECK_THROWS(RunConfig::from_json("{not json"));
}

TEST_CASE("training is reproducible from the seed") {
  const auto d = small_data();
  auto c = small_run();
  const auto a = pipeline::train(c, d);
  const auto b = pipeline::train(c, d);
  REQUIRE(a.losses.size() == 6);
  CHECK(a.losses == b.losses);
  for (double l : a.losses) CHECK(std::isfinite(l));
  c.diffusion.mode = diffusion::Mode::D0;
  CHECK(pipeline::train(c, d).losses != a.losses);
  c.diffusion.mode = diffusion::Mode::D1;
  c.training.seed = 6;
  CHECK(pipeline::train(c, d).losses != a.losses);

  const auto dir = testing::scratch_dir("train");
  auto r1 = pipeline::train(small_run(), d);
  auto r2 = pipeline::train(small_run(), d);
  pipeline::write_training_outputs(dir / "a", r1, small_run());
  pipeline::write_training_outputs(dir / "b", r2, small_run());
  CHECK(testing::read_file(dir / "a" / "checkpoint.bin") == testing::read_file(dir / "b" / "checkpoint.bin"));
  const auto loss = read_csv(dir / "a" / "loss.csv");
  REQUIRE(loss.size() == 7);
  CHECK(loss[0] == std::vector<std::string>{"iteration", "loss", "wall_time"});
  CHECK(RunConfig::load(dir / "a" / "run_config.json").to_json() == small_run().to_json());
}

TEST_CASE("channel splitting trains and imputes") {
  const auto d = small_data();
  auto c = small_run(2);
  c.channel_split_width = 2;
  auto r = pipeline::train(c, d);
  CHECK(r.model->config().in_channels == 2);
  const auto out = pipeline::impute(*r.model, r.meta, d, c.eval_scenario, c.sampling, 1);
  CHECK(out.draws.front().shape() == Shape{2, 3, 16});
}

TEST_CASE("imputation keeps conditioned entries and summarizes the draws") {
  const auto d = small_data();
  auto c = small_run(4);
  auto r = pipeline::train(c, d);
  const auto out = pipeline::impute(*r.model, r.meta, d, c.eval_scenario, c.sampling, 2);
  REQUIRE(out.draws.size() == 3);
  CHECK(out.sample_ids == d.indices(data::Split::Test));
  for (const Tensor& draw : out.draws) {
    for (Index i = 0; i < draw.size(); ++i) {
      if (out.m_imp.data()[i] * out.m_mvi.data()[i] > 0.5) CHECK(draw.data()[i] == out.truth.data()[i]);
    }
  }
  // Same seed, same draws.
  const auto again = pipeline::impute(*r.model, r.meta, d, c.eval_scenario, c.sampling, 2);
  CHECK((again.draws[2].array() == out.draws[2].array()).all());
  // Averaging draws never hurts MSE.
  CHECK(out.mean_report.mse <= out.per_draw_report.mse + 1e-12);
  CHECK(out.mean_report.n_eval > 0);

  const auto dir = testing::scratch_dir("impute");
  pipeline::write_impute_outputs(dir, out);
  const auto rows = read_csv(dir / "quantiles.csv");
  REQUIRE(rows.size() == 1 + 2 * 3 * 16);
  CHECK(rows[0] == std::vector<std::string>{"sample_id", "channel", "t", "ground_truth", "mask", "q05", "q25",
                                             "q50", "q75", "q95", "mean", "one_draw"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][4] == "1") CHECK(rows[i][3] == rows[i][7]);
  }
  CHECK(pipeline::load_samples(dir / "samples.bin").size() == 3);

  auto single = c.sampling;
  single.samples = 1;
  const auto one = pipeline::impute(*r.model, r.meta, d, c.eval_scenario, single, 2);
  for (const Tensor& q : one.summary.quantiles) CHECK((q.array() == one.draws[0].array()).all());

  auto other = small_data();
  other.values = Tensor({20, 4, 16});
  other.observed = Tensor({20, 4, 16}, 1.0);
  CHECK_THROWS_AS(pipeline::impute(*r.model, r.meta, other, c.eval_scenario, c.sampling, 2), ConfigError);
}

TEST_CASE("validation loss is a deterministic function of the seed") {
  const auto d = small_data();
  auto c = small_run(3);
  auto r = pipeline::train(c, d);
  const double a = pipeline::validation_loss(*r.model, r.meta, c, d, 4, 2);
  CHECK(std::isfinite(a));
  CHECK(a == pipeline::validation_loss(*r.model, r.meta, c, d, 4, 2));
  CHECK(a != pipeline::validation_loss(*r.model, r.meta, c, d, 5, 2));
}

TEST_CASE("command line exit codes") {
  const auto dir = testing::scratch_dir("cli");
  const std::string data = (dir / "d.bin").string();
  CHECK(run_cli("synth --kind sines -n 12 -k 2 -l 16 --seed 1 -o " + data) == 0);
  CHECK(run_cli("train --data " + data + " -o " + (dir / "run").string()) != 0);  // seed is required
  CHECK(run_cli("train --data " + data + " -o " + (dir / "run").string() +
                " --seed 1 -q --iterations 2 --residual-layers 1 --residual-channels 4 --skip-channels 4"
                " --state-dim 2 --steps 5") == 0);
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint.bin"));
  CHECK(run_cli("impute --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --data " + data + " -o " +
                (dir / "imp").string() + " --seed 1 --samples 2") == 0);
  CHECK(run_cli("eval --pred " + (dir / "imp" / "imputed.bin").string() + " --truth " +
                (dir / "imp" / "truth.bin").string() + " --mask " + (dir / "imp" / "mask_imp.bin").string()) == 0);
  CHECK(run_cli("train --data " + data + " -o " + (dir / "bad").string() + " --seed 1 --lr -1") == 2);
  CHECK(run_cli("impute --checkpoint " + (dir / "nothing.bin").string() + " --data " + data + " -o " +
                (dir / "imp2").string() + " --seed 1") == 2);
  CHECK(run_cli("mask-dump --scenario BM --ratio 0.25 -k 2 -l 8 --seed 3") == 0);
}

}
