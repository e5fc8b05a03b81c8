#include "sssd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sssd/adam.hpp"
#include "sssd/binary_io.hpp"

namespace sssd::pipeline {

namespace {

constexpr char kSamplesMagic[9] = "SSSDSMP1";
constexpr std::uint64_t kMaskStream = 0;
constexpr std::uint64_t kDrawStream = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Index group_count(Index channels, Index width) { return (channels + width - 1) / width; }

Index effective_width(Index channels, Index split_width) {
  return split_width <= 0 || split_width >= channels ? channels : split_width;
}

Tensor pack(const Tensor& t, Index split_width, double pad) {
  const Index n = t.dim(0), channels = t.dim(1), length = t.dim(2);
  const Index width = effective_width(channels, split_width);
  const Index groups = group_count(channels, width);
  Tensor out({n * groups, width, length}, pad);
  for (Index i = 0; i < n; ++i) {
    for (Index g = 0; g < groups; ++g) {
      const Index begin = g * width, count = std::min(width, channels - begin);
      out.slice(i * groups + g).topRows(count) = t.slice(i).middleRows(begin, count);
    }
  }
  return out;
}

Tensor standardized(const data::Scaler& scaler, const Tensor& values, const Tensor& observed) {
  Tensor out = scaler.apply(values);
  out.array() = (observed.array() > 0.5).select(out.array(), 0.0);
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const Index> rows) {
  Tensor out({static_cast<Index>(rows.size()), t.dim(1), t.dim(2)});
  for (std::size_t i = 0; i < rows.size(); ++i) out.slice(static_cast<Index>(i)) = t.slice(rows[i]);
  return out;
}

diffusion::LossOptions loss_options(const DiffusionConfig& d) { return {d.mode, d.target}; }

}  // namespace

ModelRows pack_rows(const Tensor& values, const Tensor& observed, Index split_width) {
  require_same_shape(values.shape(), observed.shape(), "pack_rows");
  ModelRows rows;
  rows.width = effective_width(values.dim(1), split_width);
  rows.groups = group_count(values.dim(1), rows.width);
  rows.values = pack(values, split_width, 0.0);
  rows.observed = pack(observed, split_width, 0.0);
  return rows;
}

Tensor pack_mask(const Tensor& mask, Index split_width) { return pack(mask, split_width, 1.0); }

Tensor unpack_rows(const Tensor& rows, Index groups, Index channels) {
  const Index width = rows.dim(1), length = rows.dim(2);
  if (rows.dim(0) % groups != 0) throw DimensionError("unpack_rows: row count is not a multiple of the group count");
  const Index n = rows.dim(0) / groups;
  Tensor out({n, channels, length});
  for (Index i = 0; i < n; ++i) {
    for (Index g = 0; g < groups; ++g) {
      const Index begin = g * width, count = std::min(width, channels - begin);
      out.slice(i).middleRows(begin, count) = rows.slice(i * groups + g).topRows(count);
    }
  }
  return out;
}

TrainResult train(const RunConfig& config, const data::Dataset& dataset, const ProgressFn& progress) {
  dataset.validate();
  const Index length = dataset.length();
  config.validate(length);

  TrainResult result;
  result.meta.diffusion = config.diffusion;
  result.meta.channel_split_width = config.channel_split_width;
  result.meta.scaler = data::Scaler::fit(dataset);

  const auto train_ids = dataset.indices(data::Split::Train);
  const Tensor raw = data::gather(dataset.values, train_ids);
  const Tensor observed = data::gather(dataset.observed, train_ids);
  const ModelRows rows = pack_rows(standardized(result.meta.scaler, raw, observed), observed,
                                   config.channel_split_width);
  const Index row_count = rows.values.dim(0);

  result.model = std::make_unique<model::SssdModel>(config.model.resolve(rows.width, length),
                                                    mix64(config.training.seed ^ 0x6D6F64656CULL));
  const diffusion::Schedule schedule =
      diffusion::make_schedule(config.diffusion.steps, config.diffusion.beta0, config.diffusion.beta1);
  AdamOptions adam_options;
  adam_options.learning_rate = config.training.learning_rate;
  Adam adam(result.model->parameters(), adam_options);
  const auto net = result.model->denoiser();
  const auto options = loss_options(config.diffusion);

  const Rng master(config.training.seed);
  const Index batch_size = config.training.batch_size;
  const auto start = std::chrono::steady_clock::now();
  std::vector<Index> picks(static_cast<std::size_t>(batch_size));
  for (long it = 0; it < config.training.iterations; ++it) {
    Rng rng = master.split(static_cast<std::uint64_t>(it));
    for (Index& p : picks) p = static_cast<Index>(rng.below(static_cast<std::uint64_t>(row_count)));
    diffusion::Batch batch;
    batch.x0 = gather_rows(rows.values, picks);
    batch.m_mvi = gather_rows(rows.observed, picks);
    batch.m_imp = Tensor(batch.x0.shape());
    for (Index b = 0; b < batch_size; ++b) {
      batch.m_imp.slice(b) = config.train_scenario.generate(length, rows.width, rng).matrix();
    }
    adam.zero_grad();
    double loss = 0.0;
    try {
      loss = diffusion::training_step(net, batch, schedule, options, rng);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(it) + " (lr " +
                         fmt(config.training.learning_rate) + ", last loss " +
                         (result.losses.empty() ? std::string("n/a") : fmt(result.losses.back())) + "): " + e.what());
    }
    if (!std::isfinite(loss)) {
      throw NumericError("training loss is NaN at iteration " + std::to_string(it) + " (lr " +
                         fmt(config.training.learning_rate) + ")");
    }
    adam.step();
    result.losses.push_back(loss);
    result.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (progress) progress(it, loss);
  }
  return result;
}

void write_training_outputs(const std::filesystem::path& dir, TrainResult& result, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  model::save_checkpoint(dir / "checkpoint.bin", *result.model, result.meta);
  std::ofstream trace(dir / "loss.csv");
  trace << "iteration,loss,wall_time\n";
  for (std::size_t i = 0; i < result.losses.size(); ++i) {
    trace << i << ',' << fmt(result.losses[i]) << ',' << fmt(result.wall_seconds[i]) << '\n';
  }
  std::ofstream(dir / "run_config.json") << config.to_json() << '\n';
  if (!trace) throw ConfigError("failed writing loss trace in " + dir.string());
}

double validation_loss(model::SssdModel& model, const model::CheckpointMeta& meta, const RunConfig& config,
                       const data::Dataset& dataset, std::uint64_t seed, int repeats) {
  const auto ids = dataset.indices(data::Split::Val);
  if (ids.empty()) throw ConfigError("validation_loss: dataset has no validation samples");
  const Index length = dataset.length();
  const Tensor observed = data::gather(dataset.observed, ids);
  const ModelRows rows = pack_rows(standardized(meta.scaler, data::gather(dataset.values, ids), observed), observed,
                                   meta.channel_split_width);
  const diffusion::Schedule schedule =
      diffusion::make_schedule(meta.diffusion.steps, meta.diffusion.beta0, meta.diffusion.beta1);
  const auto net = model.denoiser();
  const auto options = loss_options(meta.diffusion);
  const Index row_count = rows.values.dim(0);
  constexpr Index kChunk = 32;

  double weighted = 0.0, total_weight = 0.0;
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(rep));
    for (Index begin = 0; begin < row_count; begin += kChunk) {
      const Index count = std::min(kChunk, row_count - begin);
      std::vector<Index> picks(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) picks[static_cast<std::size_t>(i)] = begin + i;
      diffusion::Batch batch;
      batch.x0 = gather_rows(rows.values, picks);
      batch.m_mvi = gather_rows(rows.observed, picks);
      batch.m_imp = Tensor(batch.x0.shape());
      for (Index b = 0; b < count; ++b) {
        batch.m_imp.slice(b) = config.train_scenario.generate(length, rows.width, rng).matrix();
      }
      std::vector<int> steps(static_cast<std::size_t>(count));
      for (int& t : steps) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.steps())));
      const Tensor noise = rng.normal(batch.x0.shape());
      ad::Tape tape(false);
      const double loss = diffusion::training_loss(tape, net, batch, steps, noise, schedule, options).value()[0];
      const double weight = diffusion::loss_weight(batch, options.mode).array().sum();
      weighted += loss * weight;
      total_weight += weight;
    }
  }
  return total_weight > 0.0 ? weighted / total_weight : 0.0;
}

ImputeResult impute(model::SssdModel& model, const model::CheckpointMeta& meta, const data::Dataset& dataset,
                    const masking::ScenarioSpec& scenario, const SamplingConfig& sampling, std::uint64_t seed,
                    data::Split split) {
  dataset.validate();
  const Index channels = dataset.channels(), length = dataset.length();
  const model::ModelConfig& mc = model.config();
  const Index width = effective_width(channels, meta.channel_split_width);
  if (mc.in_channels != width || mc.length != length || meta.scaler.mean.size() != channels) {
    throw ConfigError("checkpoint expects " + std::to_string(mc.in_channels) + " channels x " +
                      std::to_string(mc.length) + " steps; data provides groups of " + std::to_string(width) +
                      " channels x " + std::to_string(length) + " steps");
  }
  scenario.validate(length);
  if (sampling.samples < 1) throw ConfigError("sampling.samples must be positive");

  ImputeResult result;
  result.sample_ids = dataset.indices(split);
  if (result.sample_ids.empty()) throw ConfigError("impute: selected split is empty");
  const Index n = static_cast<Index>(result.sample_ids.size());
  result.truth = data::gather(dataset.values, result.sample_ids);
  result.m_mvi = data::gather(dataset.observed, result.sample_ids);
  result.m_imp = Tensor(result.truth.shape());
  const Rng base(seed);
  for (Index i = 0; i < n; ++i) {
    Rng mask_rng = base.split(kMaskStream).split(static_cast<std::uint64_t>(result.sample_ids[static_cast<std::size_t>(i)]));
    result.m_imp.slice(i) = scenario.generate(length, channels, mask_rng).matrix();
  }

  const ModelRows rows = pack_rows(standardized(meta.scaler, result.truth, result.m_mvi), result.m_mvi,
                                   meta.channel_split_width);
  const Tensor imp_rows = pack_mask(result.m_imp, meta.channel_split_width);
  const diffusion::ConditioningBundle all = diffusion::make_conditioning(rows.values, imp_rows, rows.observed);
  const diffusion::Schedule schedule =
      diffusion::make_schedule(meta.diffusion.steps, meta.diffusion.beta0, meta.diffusion.beta1);
  const auto net = model.denoiser();
  const auto options = loss_options(meta.diffusion);

  const Index row_count = rows.values.dim(0);
  const Index total = row_count * sampling.samples;
  std::vector<Tensor> packed(static_cast<std::size_t>(sampling.samples), Tensor(rows.values.shape()));
  for (Index begin = 0; begin < total; begin += sampling.batch_rows) {
    const Index count = std::min(sampling.batch_rows, total - begin);
    std::vector<Index> picks(static_cast<std::size_t>(count));
    std::vector<Rng> rngs;
    for (Index j = 0; j < count; ++j) {
      const Index flat = begin + j;
      const Index draw = flat / row_count, row = flat % row_count;
      picks[static_cast<std::size_t>(j)] = row;
      const auto sample_id = static_cast<std::uint64_t>(result.sample_ids[static_cast<std::size_t>(row / rows.groups)]);
      rngs.push_back(base.split(kDrawStream)
                         .split(sample_id)
                         .split(static_cast<std::uint64_t>(draw))
                         .split(static_cast<std::uint64_t>(row % rows.groups)));
    }
    diffusion::ConditioningBundle chunk{gather_rows(all.cond, picks), gather_rows(all.mask, picks)};
    const Tensor x = diffusion::reverse_sample(net, chunk, schedule, options, rngs);
    for (Index j = 0; j < count; ++j) {
      const Index flat = begin + j;
      packed[static_cast<std::size_t>(flat / row_count)].slice(flat % row_count) = x.slice(j);
    }
  }

  const auto conditioned = (result.m_imp.array() * result.m_mvi.array() > 0.5).eval();
  for (const Tensor& p : packed) {
    Tensor draw = meta.scaler.inverse(unpack_rows(p, rows.groups, channels));
    draw.array() = conditioned.select(result.truth.array(), draw.array());
    result.draws.push_back(std::move(draw));
  }

  result.summary = diffusion::summarize_samples(result.draws, sampling.quantiles);
  const Tensor m_eval = metrics::eval_mask(result.m_imp, result.m_mvi);
  if (m_eval.array().sum() > 0.0) {
    std::vector<metrics::EvalReport> reports;
    for (const Tensor& d : result.draws) reports.push_back(metrics::evaluate(result.truth, d, m_eval));
    result.per_draw_report = metrics::average(reports);
    result.mean_report = metrics::evaluate(result.truth, result.summary.mean, m_eval);
  } else {
    warn("impute: evaluation mask is empty; metrics not computed");
  }
  return result;
}

std::string quantile_column(double level) {
  const double pct = level * 100.0;
  char buf[32];
  if (std::abs(pct - std::round(pct)) < 1e-9) {
    std::snprintf(buf, sizeof(buf), "q%02d", static_cast<int>(std::round(pct)));
  } else {
    std::snprintf(buf, sizeof(buf), "q%g", pct);
  }
  return buf;
}

void save_samples(const std::filesystem::path& path, const std::vector<Tensor>& draws) {
  if (draws.empty()) throw ConfigError("save_samples: no draws");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write samples " + path.string());
  io::write_magic(os, kSamplesMagic);
  io::write_u64(os, draws.size());
  for (Index d : draws.front().shape()) io::write_u64(os, static_cast<std::uint64_t>(d));
  for (const Tensor& t : draws) {
    for (double v : t.values()) io::write_f64(os, v);
  }
}

std::vector<Tensor> load_samples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open samples " + path.string());
  io::expect_magic(is, kSamplesMagic, "samples " + path.string());
  const auto count = io::read_u64(is);
  Shape shape(3);
  for (Index& d : shape) d = static_cast<Index>(io::read_u64(is));
  std::vector<Tensor> draws;
  for (std::uint64_t s = 0; s < count; ++s) {
    Tensor t(shape);
    for (double& v : t.values()) v = io::read_f64(is);
    draws.push_back(std::move(t));
  }
  return draws;
}

void write_impute_outputs(const std::filesystem::path& dir, const ImputeResult& result) {
  std::filesystem::create_directories(dir);
  save_samples(dir / "samples.bin", result.draws);

  const auto n = static_cast<Index>(result.sample_ids.size());
  auto as_dataset = [n](const Tensor& values, const Tensor& observed) {
    data::Dataset d;
    d.values = values;
    d.observed = observed;
    d.split.assign(static_cast<std::size_t>(n), data::Split::Test);
    return d;
  };
  data::save_dataset(dir / "truth.bin", as_dataset(result.truth, result.m_mvi));
  data::save_dataset(dir / "imputed.bin", as_dataset(result.summary.mean, result.m_mvi));
  data::save_dataset(dir / "mask_imp.bin", as_dataset(result.m_imp, Tensor(result.m_imp.shape(), 1.0)));

  {
    using nlohmann::json;
    json report = {{"samples", result.draws.size()}, {"test_series", n}};
    if (result.mean_report.n_eval > 0) {
      report["mean_imputation"] = json::parse(result.mean_report.to_json());
      report["per_draw_average"] = json::parse(result.per_draw_report.to_json());
    }
    std::ofstream(dir / "report.json") << report.dump(2) << '\n';
  }

  std::ofstream csv(dir / "quantiles.csv");
  csv << "sample_id,channel,t,ground_truth,mask";
  for (double q : result.summary.levels) csv << ',' << quantile_column(q);
  csv << ",mean,one_draw\n";
  const Index channels = result.truth.dim(1), length = result.truth.dim(2);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < channels; ++k) {
      for (Index t = 0; t < length; ++t) {
        const int mask = result.m_imp(i, k, t) * result.m_mvi(i, k, t) > 0.5 ? 1 : 0;
        csv << result.sample_ids[static_cast<std::size_t>(i)] << ',' << k << ',' << t << ','
            << fmt(result.truth(i, k, t)) << ',' << mask;
        for (const Tensor& q : result.summary.quantiles) csv << ',' << fmt(q(i, k, t));
        csv << ',' << fmt(result.summary.mean(i, k, t)) << ',' << fmt(result.draws.front()(i, k, t)) << '\n';
      }
    }
  }
  if (!csv) throw ConfigError("failed writing quantiles.csv in " + dir.string());
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace sssd::pipeline
