#include "sssd/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sssd {

using nlohmann::json;

model::ModelConfig ModelSettings::resolve(Index in_channels, Index length) const {
  model::ModelConfig c;
  c.residual_layers = residual_layers;
  c.residual_channels = residual_channels;
  c.skip_channels = skip_channels;
  c.embed_dims = embed_dims;
  c.state_dim = state_dim;
  c.bidirectional = bidirectional;
  c.second_s4 = second_s4;
  c.in_channels = in_channels;
  c.length = length;
  return c;
}

void RunConfig::validate(Index length) const {
  train_scenario.validate(length);
  eval_scenario.validate(length);
  if (diffusion.steps < 2) throw ConfigError("diffusion.steps must be >= 2");
  if (!(diffusion.beta0 > 0.0 && diffusion.beta0 <= diffusion.beta1 && diffusion.beta1 < 1.0)) {
    throw ConfigError("diffusion betas must satisfy 0 < beta0 <= beta1 < 1");
  }
  if (training.iterations < 0) throw ConfigError("training.iterations must be non-negative");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be positive");
  if (!(training.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
  if (sampling.samples < 1) throw ConfigError("sampling.samples must be positive");
  if (sampling.batch_rows < 1) throw ConfigError("sampling.batch_rows must be positive");
  for (double q : sampling.quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("sampling.quantiles must lie in (0, 1)");
  }
  if (channel_split_width < 0) throw ConfigError("channel_split_width must be non-negative");
  model.resolve(1, length).validate();
}

namespace {

json scenario_json(const masking::ScenarioSpec& s) {
  return {{"kind", masking::to_string(s.scenario)}, {"ratio", s.ratio}, {"horizon", s.horizon}};
}

masking::ScenarioSpec scenario_from(const json& j, masking::ScenarioSpec s) {
  if (j.contains("kind")) s.scenario = masking::parse_scenario(j.at("kind").get<std::string>());
  if (j.contains("ratio")) s.ratio = j.at("ratio").get<double>();
  if (j.contains("horizon")) s.horizon = j.at("horizon").get<Index>();
  return s;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string RunConfig::to_json(int indent) const {
  json j;
  j["train_scenario"] = scenario_json(train_scenario);
  j["eval_scenario"] = scenario_json(eval_scenario);
  j["diffusion"] = {{"steps", diffusion.steps},
                    {"beta0", diffusion.beta0},
                    {"beta1", diffusion.beta1},
                    {"mode", diffusion::to_string(diffusion.mode)},
                    {"target", diffusion::to_string(diffusion.target)}};
  j["model"] = {{"residual_layers", model.residual_layers},
                {"residual_channels", model.residual_channels},
                {"skip_channels", model.skip_channels},
                {"embed_dims", model.embed_dims},
                {"state_dim", model.state_dim},
                {"bidirectional", model.bidirectional},
                {"second_s4", model.second_s4}};
  j["training"] = {{"iterations", training.iterations},
                   {"batch_size", training.batch_size},
                   {"learning_rate", training.learning_rate},
                   {"seed", training.seed}};
  j["sampling"] = {{"samples", sampling.samples}, {"quantiles", sampling.quantiles}, {"batch_rows", sampling.batch_rows}};
  j["channel_split_width"] = channel_split_width;
  return j.dump(indent);
}

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("train_scenario")) c.train_scenario = scenario_from(j.at("train_scenario"), c.train_scenario);
    if (j.contains("eval_scenario")) c.eval_scenario = scenario_from(j.at("eval_scenario"), c.eval_scenario);
    if (j.contains("diffusion")) {
      const json& d = j.at("diffusion");
      read(d, "steps", c.diffusion.steps);
      read(d, "beta0", c.diffusion.beta0);
      read(d, "beta1", c.diffusion.beta1);
      if (d.contains("mode")) c.diffusion.mode = diffusion::parse_mode(d.at("mode").get<std::string>());
      if (d.contains("target")) c.diffusion.target = diffusion::parse_target(d.at("target").get<std::string>());
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      read(m, "residual_layers", c.model.residual_layers);
      read(m, "residual_channels", c.model.residual_channels);
      read(m, "skip_channels", c.model.skip_channels);
      read(m, "embed_dims", c.model.embed_dims);
      read(m, "state_dim", c.model.state_dim);
      read(m, "bidirectional", c.model.bidirectional);
      read(m, "second_s4", c.model.second_s4);
    }
    if (j.contains("training")) {
      const json& t = j.at("training");
      read(t, "iterations", c.training.iterations);
      read(t, "batch_size", c.training.batch_size);
      read(t, "learning_rate", c.training.learning_rate);
      read(t, "seed", c.training.seed);
    }
    if (j.contains("sampling")) {
      const json& s = j.at("sampling");
      read(s, "samples", c.sampling.samples);
      read(s, "quantiles", c.sampling.quantiles);
      read(s, "batch_rows", c.sampling.batch_rows);
    }
    read(j, "channel_split_width", c.channel_split_width);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

}  // namespace sssd
