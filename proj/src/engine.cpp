// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/engine.hpp"

#include <chrono>
#include <ostream>

#include <json.hpp>

#include "flashffn/kernels.hpp"

namespace flashffn {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

std::vector<std::uint32_t> default_prompt(const ToyModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedull);
  return {static_cast<std::uint32_t>(rng() % model.config().vocab)};
}

void check_predictors(const ToyModel& model, std::span<const PredictorParams> predictors) {
  const auto& c = model.config();
  if (predictors.size() != c.n_layers) fail(ErrorKind::kUsage, "need one predictor per layer");
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    const auto& p = predictors[l];
    if (p.layer != l || p.d_model != c.d_model || p.d_ffn != c.d_ffn) {
      fail(ErrorKind::kDimension, "predictor " + std::to_string(l) + " does not match the model");
    }
  }
}

}  // namespace

std::vector<float> sparse_ffn_forward(std::span<const float> x, const CacheViews& views) {
  std::vector<float> y(views.up.cols, 0.0f);
  kernels::sparse_ffn_parallel(x, views, y);
  return y;
}

std::vector<float> dense_oracle_forward(std::span<const float> x, const LayerWeights& weights) {
  std::vector<float> y(weights.d_model, 0.0f);
  kernels::dense_ffn_serial(x, weights, y);
  return y;
}

std::vector<float> masked_dense_forward(std::span<const float> x, const LayerWeights& weights,
                                        std::span<const NeuronIndex> keep) {
  std::vector<float> y(weights.d_model, 0.0f);
  kernels::masked_dense_ffn(x, weights, keep, y);
  return y;
}

IndexSet true_active_set(std::span<const float> x, const LayerWeights& weights) {
  if (x.size() != weights.d_model) fail(ErrorKind::kDimension, "dimension mismatch");
  IndexSet out;
  for (std::size_t j = 0; j < weights.d_ffn; ++j) {
    double s = weights.bias[j];
    const float* row = weights.up.data() + j * weights.d_model;
    for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(row[i]) * x[i];
    if (s > 0.0) out.push_back(static_cast<NeuronIndex>(j));
  }
  return out;
}

std::vector<std::size_t> calibrate_capacities(const ToyModel& model, RecordSource& source,
                                              std::span<const PredictorParams> predictors,
                                              const EngineOptions& options) {
  const auto& c = model.config();
  EngineOptions cal = options;
  cal.capacities.assign(c.n_layers, c.d_ffn);
  if (cal.prompt.empty()) cal.prompt = default_prompt(model, options.seed);
  cal.n_tokens = options.calibration_tokens;
  cal.seed = options.calibration_seed;
  cal.sampling = Sampling::kNucleus;
  cal.keep_steps = false;
  cal.oracle = nullptr;
  const auto run = run_generation(model, source, predictors, cal);
  std::vector<std::size_t> caps;
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    caps.push_back(calibrate_capacity(run.predicted.layer_sets(l), options.window_k, options.req_headroom, c.d_ffn));
  }
  return caps;
}

GenerationResult run_generation(const ToyModel& model, RecordSource& source,
                                std::span<const PredictorParams> predictors, EngineOptions options) {
  const auto& c = model.config();
  check_predictors(model, predictors);
  if (options.oracle && options.oracle->size() != c.n_layers) fail(ErrorKind::kUsage, "oracle layer count mismatch");
  if (options.capacities.empty()) options.capacities = calibrate_capacities(model, source, predictors, options);
  if (options.capacities.size() != c.n_layers) fail(ErrorKind::kUsage, "need one capacity per layer");
  if (options.prompt.empty()) options.prompt = default_prompt(model, options.seed);

  GenerationResult result;
  result.capacities = options.capacities;
  result.window_k = options.window_k;
  result.record_stride = source.record_stride();
  for (auto* t : {&result.predicted, &result.truth}) {
    t->n_layers = c.n_layers;
    t->d_ffn = c.d_ffn;
  }
  result.predicted.provenance = "engine:predicted seed=" + std::to_string(options.seed);
  result.truth.provenance = "engine:relu seed=" + std::to_string(options.seed);

  std::vector<NeuronCache> caches;
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    caches.emplace_back(CacheConfig{l, c.d_model, c.d_ffn, options.capacities[l], options.window_k, options.overflow});
  }

  std::mt19937_64 rng(options.seed);
  auto state = model.initial_state();
  const std::size_t total = options.prompt.size() + options.n_tokens;
  std::uint32_t token = options.prompt.front();

  for (std::size_t pos = 0; pos < total; ++pos) {
    if (pos < options.prompt.size()) token = options.prompt[pos];
    const auto wall_start = Clock::now();
    TokenRecord rec;
    rec.position = static_cast<std::uint32_t>(pos);
    rec.token = token;
    rec.prompt = pos < options.prompt.size();
    result.tokens.push_back(token);

    std::vector<IndexSet> predicted_sets, true_sets;
    std::vector<std::size_t> cached;
    auto t = Clock::now();
    auto h = model.embed(token);
    rec.compute_ms += ms_since(t);
    for (std::uint32_t l = 0; l < c.n_layers; ++l) {
      try {
        TokenStep step;
        step.layer = l;
        t = Clock::now();
        auto x = model.attention(l, h, state);
        auto predicted = predict_active(predictors[l], x);
        step.compute_ms += ms_since(t);

        step.stats = caches[l].update_window(predicted, source);

        t = Clock::now();
        auto y = sparse_ffn_forward(x, caches[l].resident_views());
        model.residual(h, x, y);
        step.compute_ms += ms_since(t);

        if (options.oracle) true_sets.push_back(true_active_set(x, (*options.oracle)[l]));

        rec.io_ms += step.stats.io_seconds * 1e3;
        rec.mem_ms += step.stats.mem_seconds * 1e3;
        rec.compute_ms += step.compute_ms;
        rec.bytes_fetched += step.stats.bytes_fetched;
        rec.predicted_neurons += predicted.size();
        rec.cached_neurons += caches[l].num_used();
        rec.deleted += step.stats.deleted;
        rec.inserted += step.stats.inserted;
        rec.element_moves += step.stats.element_moves;
        cached.push_back(caches[l].num_used());
        if (options.keep_steps) {
          step.attention_output = std::move(x);
          step.ffn_output = std::move(y);
          step.predicted_set = predicted;
          rec.steps.push_back(std::move(step));
        }
        predicted_sets.push_back(std::move(predicted));
      } catch (const Error& e) {
        throw Error(e.kind(), "token " + std::to_string(pos) + " layer " + std::to_string(l) + ": " + e.what());
      }
    }
    if (pos + 1 >= options.prompt.size()) {
      t = Clock::now();
      token = model.next_token(h, options.sampling, rng);
      rec.compute_ms += ms_since(t);
    }
    rec.total_ms = rec.io_ms + rec.mem_ms + rec.compute_ms;
    rec.wall_ms = ms_since(wall_start);

    result.predicted.append(std::move(predicted_sets));
    if (options.oracle) result.truth.append(std::move(true_sets));
    result.cached_rows.push_back(std::move(cached));
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::vector<std::vector<LabeledSample>> collect_training_samples(const ToyModel& model, std::uint32_t n_tokens,
                                                                 std::uint64_t seed, Sampling sampling) {
  const auto& c = model.config();
  std::vector<std::vector<LabeledSample>> out(c.n_layers);
  std::mt19937_64 rng(seed);
  auto state = model.initial_state();
  auto token = default_prompt(model, seed).front();
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    auto h = model.embed(token);
    for (std::uint32_t l = 0; l < c.n_layers; ++l) {
      auto x = model.attention(l, h, state);
      const auto& w = model.ffn_layers()[l];
      out[l].push_back(LabeledSample{x, true_active_set(x, w)});
      auto y = dense_oracle_forward(x, w);
      model.residual(h, x, y);
    }
    token = model.next_token(h, sampling, rng);
  }
  return out;
}

void write_token_records(std::ostream& out, const GenerationResult& result) {
  out << nlohmann::json{{"schema", "flashffn.run_tokens/1"}}.dump() << '\n';
  for (const auto& r : result.records) {
    nlohmann::json j{{"position", r.position},
                     {"token", r.token},
                     {"prompt", r.prompt},
                     {"io_ms", r.io_ms},
                     {"mem_ms", r.mem_ms},
                     {"compute_ms", r.compute_ms},
                     {"total_ms", r.total_ms},
                     {"wall_ms", r.wall_ms},
                     {"bytes_fetched", r.bytes_fetched},
                     {"predicted_neurons", r.predicted_neurons},
                     {"cached_neurons", r.cached_neurons},
                     {"deleted", r.deleted},
                     {"inserted", r.inserted},
                     {"element_moves", r.element_moves}};
    out << j.dump() << '\n';
  }
}

std::string summary_json(const GenerationResult& result) {
  double io = 0, mem = 0, compute = 0, wall = 0;
  std::uint64_t bytes = 0;
  for (const auto& r : result.records) {
    io += r.io_ms;
    mem += r.mem_ms;
    compute += r.compute_ms;
    wall += r.wall_ms;
    bytes += r.bytes_fetched;
  }
  const double n = result.records.empty() ? 1.0 : static_cast<double>(result.records.size());
  nlohmann::json j{
      {"schema", "flashffn.run_summary/1"},
      {"tokens", result.records.size()},
      {"window_k", result.window_k},
      {"record_stride", result.record_stride},
      {"capacities", result.capacities},
      {"per_token_ms", {{"io", io / n}, {"mem", mem / n}, {"compute", compute / n}, {"total", (io + mem + compute) / n}}},
      {"wall_ms_per_token", wall / n},
      {"bytes_fetched_total", bytes},
      {"bytes_fetched_per_token", static_cast<double>(bytes) / n},
      {"io_gib_per_s", io > 0 ? static_cast<double>(bytes) / (1ull << 30) / (io / 1e3) : 0.0},
  };
  return j.dump(2);
}

}  // namespace flashffn
