// Command-line front end: synth, train, impute, eval, mask-dump.
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sssd/checkpoint.hpp"
#include "sssd/errors.hpp"
#include "sssd/metrics.hpp"
#include "sssd/pipeline.hpp"

namespace {

using namespace sssd;

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

// Collects RunConfig overrides; each is applied only when its flag was given.
class Overrides {
 public:
  template <typename T, typename Setter>
  void add(CLI::App* app, const std::string& flag, const std::string& help, Setter setter) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    appliers_.push_back([opt, value, setter](RunConfig& c) {
      if (opt->count() > 0) setter(c, *value);
    });
  }

  void apply(RunConfig& c) const {
    for (const auto& f : appliers_) f(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

void add_scenario_flags(CLI::App* app, Overrides& o, const std::string& prefix, bool train) {
  auto pick = [train](RunConfig& c) -> masking::ScenarioSpec& { return train ? c.train_scenario : c.eval_scenario; };
  o.add<std::string>(app, "--" + prefix + "scenario", "RM, RBM, BM or TF",
                     [pick](RunConfig& c, const std::string& v) { pick(c).scenario = masking::parse_scenario(v); });
  o.add<double>(app, "--" + prefix + "ratio", "missing ratio in (0, 1)",
                [pick](RunConfig& c, double v) { pick(c).ratio = v; });
  o.add<Index>(app, "--" + prefix + "horizon", "forecast horizon for TF",
               [pick](RunConfig& c, Index v) { pick(c).horizon = v; });
}

void add_run_flags(CLI::App* app, Overrides& o) {
  add_scenario_flags(app, o, "train-", true);
  add_scenario_flags(app, o, "eval-", false);
  o.add<int>(app, "--steps", "diffusion steps T", [](RunConfig& c, int v) { c.diffusion.steps = v; });
  o.add<double>(app, "--beta0", "first noise level", [](RunConfig& c, double v) { c.diffusion.beta0 = v; });
  o.add<double>(app, "--beta1", "last noise level", [](RunConfig& c, double v) { c.diffusion.beta1 = v; });
  o.add<std::string>(app, "--mode", "D0 or D1",
                     [](RunConfig& c, const std::string& v) { c.diffusion.mode = diffusion::parse_mode(v); });
  o.add<std::string>(app, "--target", "epsilon or x0",
                     [](RunConfig& c, const std::string& v) { c.diffusion.target = diffusion::parse_target(v); });
  o.add<std::string>(app, "--preset", "model size preset: desk or reference", [](RunConfig& c, const std::string& v) {
    model::ModelConfig m;
    if (v == "desk") {
      m = model::ModelConfig::desk(1, 1);
    } else if (v == "reference") {
      m = model::ModelConfig::reference(1, 1);
    } else {
      throw ConfigError("unknown preset '" + v + "'");
    }
    c.model.residual_layers = m.residual_layers;
    c.model.residual_channels = m.residual_channels;
    c.model.skip_channels = m.skip_channels;
    c.model.embed_dims = m.embed_dims;
    c.model.state_dim = m.state_dim;
    c.model.bidirectional = m.bidirectional;
    c.model.second_s4 = m.second_s4;
  });
  o.add<Index>(app, "--residual-layers", "", [](RunConfig& c, Index v) { c.model.residual_layers = v; });
  o.add<Index>(app, "--residual-channels", "", [](RunConfig& c, Index v) { c.model.residual_channels = v; });
  o.add<Index>(app, "--skip-channels", "", [](RunConfig& c, Index v) { c.model.skip_channels = v; });
  o.add<Index>(app, "--state-dim", "S4 state size N", [](RunConfig& c, Index v) { c.model.state_dim = v; });
  o.add<bool>(app, "--bidirectional", "", [](RunConfig& c, bool v) { c.model.bidirectional = v; });
  o.add<bool>(app, "--second-s4", "S4 after the conditioning add", [](RunConfig& c, bool v) { c.model.second_s4 = v; });
  o.add<long>(app, "--iterations", "", [](RunConfig& c, long v) { c.training.iterations = v; });
  o.add<Index>(app, "--batch-size", "", [](RunConfig& c, Index v) { c.training.batch_size = v; });
  o.add<double>(app, "--lr", "Adam learning rate", [](RunConfig& c, double v) { c.training.learning_rate = v; });
  o.add<Index>(app, "--samples", "draws per test sample", [](RunConfig& c, Index v) { c.sampling.samples = v; });
  o.add<std::vector<double>>(app, "--quantiles", "",
                             [](RunConfig& c, const std::vector<double>& v) { c.sampling.quantiles = v; });
  o.add<Index>(app, "--batch-rows", "rows per sampling batch", [](RunConfig& c, Index v) { c.sampling.batch_rows = v; });
  o.add<Index>(app, "--split-width", "channel group width, 0 for none",
               [](RunConfig& c, Index v) { c.channel_split_width = v; });
}

RunConfig base_config(const std::string& config_path) {
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("SSSD_CONFIG")) path = env;
  }
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

data::Dataset read_data(const std::string& path) {
  if (path.ends_with(".csv")) {
    data::Dataset d = data::load_csv(path);
    data::assign_splits(d);
    return d;
  }
  return data::load_dataset(path);
}

}  // namespace

int main(int argc, char** argv) {
  sssd::pipeline::tune_allocator();
  CLI::App app{"Diffusion imputation of multichannel time series with structured state space layers"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_kind = "sines", synth_out;
  Index synth_n = 512, synth_k = 4, synth_l = 128;
  double synth_noise = 0.05, synth_missing = 0.0;
  std::uint64_t synth_seed = 0;
  synth->add_option("--kind", synth_kind, "sines, damped or square-mix");
  synth->add_option("-n,--samples", synth_n);
  synth->add_option("-k,--channels", synth_k);
  synth->add_option("-l,--length", synth_l);
  synth->add_option("--noise", synth_noise, "observation noise sd");
  synth->add_option("--missing", synth_missing, "fraction of entries marked absent");
  synth->add_option("--seed", synth_seed);
  synth->add_option("-o,--out", synth_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, train_out, train_config;
  std::uint64_t train_seed = 0;
  Overrides train_over;
  train->add_option("--data", train_data)->required();
  train->add_option("-o,--out", train_out)->required();
  train->add_option("--config", train_config, "RunConfig JSON (else $SSSD_CONFIG)");
  train->add_option("--seed", train_seed)->required();
  add_run_flags(train, train_over);
  bool train_quiet = false;
  train->add_flag("-q,--quiet", train_quiet);

  // impute
  auto* imp = app.add_subcommand("impute", "draw imputations for the test split");
  std::string imp_ckpt, imp_data, imp_out, imp_config;
  std::uint64_t imp_seed = 0;
  Overrides imp_over;
  imp->add_option("--checkpoint", imp_ckpt)->required();
  imp->add_option("--data", imp_data)->required();
  imp->add_option("-o,--out", imp_out)->required();
  imp->add_option("--config", imp_config, "RunConfig JSON (else $SSSD_CONFIG)");
  imp->add_option("--seed", imp_seed)->required();
  add_run_flags(imp, imp_over);

  // eval
  auto* ev = app.add_subcommand("eval", "score imputations against ground truth");
  std::string ev_pred, ev_truth, ev_mask;
  ev->add_option("--pred", ev_pred, "imputed dataset file")->required();
  ev->add_option("--truth", ev_truth, "ground-truth dataset file")->required();
  ev->add_option("--mask", ev_mask, "imputation mask dataset file (1 = conditioned)")->required();

  // mask-dump
  auto* md = app.add_subcommand("mask-dump", "print one mask as CSV");
  std::string md_scenario = "RM";
  double md_ratio = 0.2;
  Index md_horizon = 0, md_k = 4, md_l = 100;
  std::uint64_t md_seed = 0;
  md->add_option("--scenario", md_scenario);
  md->add_option("--ratio", md_ratio);
  md->add_option("--horizon", md_horizon);
  md->add_option("-k,--channels", md_k);
  md->add_option("-l,--length", md_l);
  md->add_option("--seed", md_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (synth_n < 1 || synth_k < 1 || synth_l < 1 || synth_noise < 0.0 || synth_missing < 0.0 || synth_missing >= 1.0) {
        throw ConfigError("synth: sizes must be positive, noise >= 0, missing in [0, 1)");
      }
      data::Dataset d =
          data::synth_dataset(data::parse_synth_kind(synth_kind), synth_n, synth_k, synth_l, synth_noise, synth_seed);
      if (synth_missing > 0.0) {
        Rng rng = Rng(synth_seed).split(7);
        for (double& m : d.observed.values()) m = rng.uniform() < synth_missing ? 0.0 : 1.0;
        d.values.array() *= d.observed.array();
      }
      data::save_dataset(synth_out, d);
    } else if (*train) {
      RunConfig cfg = base_config(train_config);
      train_over.apply(cfg);
      cfg.training.seed = train_seed;
      const data::Dataset d = read_data(train_data);
      const long every = std::max<long>(1, cfg.training.iterations / 20);
      auto result = pipeline::train(cfg, d, [&](long it, double loss) {
        if (!train_quiet && (it % every == 0 || it + 1 == cfg.training.iterations)) {
          std::cerr << "iter " << it << " loss " << loss << '\n';
        }
      });
      pipeline::write_training_outputs(train_out, result, cfg);
    } else if (*imp) {
      RunConfig cfg = base_config(imp_config);
      imp_over.apply(cfg);
      const auto ckpt = model::read_checkpoint(imp_ckpt);
      auto net = model::instantiate(ckpt);
      const data::Dataset d = read_data(imp_data);
      const auto result = pipeline::impute(*net, ckpt.meta, d, cfg.eval_scenario, cfg.sampling, imp_seed);
      pipeline::write_impute_outputs(imp_out, result);
      if (result.mean_report.n_eval > 0) std::cout << result.per_draw_report.to_json() << '\n';
    } else if (*ev) {
      const data::Dataset pred = data::load_dataset(ev_pred);
      const data::Dataset truth = data::load_dataset(ev_truth);
      const data::Dataset mask = data::load_dataset(ev_mask);
      const Tensor m_eval = metrics::eval_mask(mask.values, truth.observed);
      std::cout << metrics::evaluate(truth.values, pred.values, m_eval).to_json() << '\n';
    } else if (*md) {
      masking::ScenarioSpec spec{masking::parse_scenario(md_scenario), md_ratio, md_horizon};
      spec.validate(md_l);
      Rng rng(md_seed);
      std::cout << masking::to_csv(spec.generate(md_l, md_k, rng));
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  }
  return 0;
}
