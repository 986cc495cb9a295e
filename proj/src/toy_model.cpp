// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace flashffn {

void ToyModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || vocab == 0) fail(ErrorKind::kUsage, "model dimensions must be positive");
  if (d_ffn < d_model) fail(ErrorKind::kUsage, "d_ffn must be >= d_model");
  if (scalar_width != 4 && scalar_width != 2) fail(ErrorKind::kUsage, "scalar_width must be 2 or 4");
  if (!(context_decay >= 0.0f && context_decay < 1.0f)) fail(ErrorKind::kUsage, "context_decay must be in [0, 1)");
}

Sampling parse_sampling(std::string_view text) {
  if (text == "greedy") return Sampling::kGreedy;
  if (text == "nucleus") return Sampling::kNucleus;
  fail(ErrorKind::kUsage, "sampling must be greedy or nucleus");
}

ToyModel::ToyModel(const ToyModelConfig& config) : config_(config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const std::size_t d = config.d_model;
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));

  embeddings_.resize(static_cast<std::size_t>(config.vocab) * d);
  for (auto& v : embeddings_) v = normal(rng);

  attn_.resize(config.n_layers);
  for (auto& w : attn_) {
    w.resize(d * d);
    for (auto& v : w) v = normal(rng) * 1.5f * inv_sqrt_d;
  }

  const float down_scale = 1.0f / std::sqrt(static_cast<float>(config.d_ffn) * 0.1f);
  for (std::uint32_t l = 0; l < config.n_layers; ++l) {
    LayerWeights w(d, config.d_ffn);
    for (std::size_t j = 0; j < config.d_ffn; ++j) {
      const float gain = std::exp(config.neuron_scale_sigma * normal(rng));
      for (std::size_t i = 0; i < d; ++i) w.up[j * d + i] = normal(rng) * gain * inv_sqrt_d;
      for (std::size_t i = 0; i < d; ++i) w.down[j * d + i] = normal(rng) * down_scale * inv_sqrt_d;
      w.bias[j] = config.ffn_bias * gain + 0.1f * normal(rng);
    }
    ffn_.push_back(std::move(w));
  }
  if (config.scalar_width == 2) {
    // Round to what a 2-byte store will hold.
    for (auto& w : ffn_) {
      for (auto* v : {&w.up, &w.down, &w.bias})
        for (auto& s : *v) s = half_to_float(float_to_half(s));
    }
  }
}

ToyModel::State ToyModel::initial_state() const {
  State s;
  s.context.assign(config_.n_layers, std::vector<float>(config_.d_model, 0.0f));
  return s;
}

std::vector<float> ToyModel::embed(std::uint32_t token) const {
  if (token >= config_.vocab) fail(ErrorKind::kUsage, "token out of range");
  const auto* e = embeddings_.data() + static_cast<std::size_t>(token) * config_.d_model;
  return {e, e + config_.d_model};
}

std::vector<float> ToyModel::attention(std::uint32_t layer, std::span<const float> h, State& state) const {
  if (h.size() != config_.d_model) fail(ErrorKind::kDimension, "hidden state has the wrong length");
  const std::size_t d = config_.d_model;
  auto& ctx = state.context.at(layer);
  const auto& w = attn_[layer];
  std::vector<float> x(d);
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(w[r * d + c]) * (h[c] + ctx[c]);
    x[r] = static_cast<float>(std::tanh(s));
  }
  x[0] = 1.0f;
  const float decay = config_.context_decay;
  for (std::size_t c = 0; c < d; ++c) ctx[c] = decay * ctx[c] + (1.0f - decay) * h[c];
  return x;
}

void ToyModel::residual(std::vector<float>& h, std::span<const float> x, std::span<const float> y) const {
  double ss = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] += x[i] + y[i];
    ss += static_cast<double>(h[i]) * h[i];
  }
  const auto inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(h.size()) + 1e-6));
  for (auto& v : h) v *= inv;
}

std::uint32_t ToyModel::next_token(std::span<const float> h, Sampling sampling, std::mt19937_64& rng) const {
  const std::size_t d = config_.d_model;
  std::vector<double> logits(config_.vocab);
  for (std::size_t t = 0; t < config_.vocab; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(embeddings_[t * d + i]) * h[i];
    logits[t] = s / std::sqrt(static_cast<double>(d));
  }
  if (sampling == Sampling::kGreedy) {
    return static_cast<std::uint32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  // Nucleus: smallest set of tokens whose probability mass reaches 0.9.
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) z += p[t] = std::exp(logits[t] - top);
  std::vector<std::uint32_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && mass < 0.9 * z) mass += p[order[keep++]];
  std::uniform_real_distribution<double> u(0.0, mass);
  double r = u(rng);
  for (std::size_t i = 0; i < keep; ++i) {
    r -= p[order[i]];
    if (r <= 0.0) return order[i];
  }
  return order[keep - 1];
}

void write_model_config(const std::filesystem::path& path, const ToyModelConfig& c) {
  nlohmann::json j{{"schema", "flashffn.model/1"},     {"d_model", c.d_model},
                   {"d_ffn", c.d_ffn},                 {"n_layers", c.n_layers},
                   {"vocab", c.vocab},                 {"scalar_width", c.scalar_width},
                   {"seed", c.seed},                   {"ffn_bias", c.ffn_bias},
                   {"neuron_scale_sigma", c.neuron_scale_sigma}, {"context_decay", c.context_decay}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  out << j.dump(2) << '\n';
}

ToyModelConfig read_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  ToyModelConfig c;
  try {
    auto j = nlohmann::json::parse(in);
    if (j.value("schema", "") != "flashffn.model/1") fail(ErrorKind::kData, "model config: unknown schema");
    c.d_model = j.at("d_model");
    c.d_ffn = j.at("d_ffn");
    c.n_layers = j.at("n_layers");
    c.vocab = j.at("vocab");
    c.scalar_width = j.at("scalar_width");
    c.seed = j.at("seed");
    c.ffn_bias = j.at("ffn_bias");
    c.neuron_scale_sigma = j.at("neuron_scale_sigma");
    c.context_decay = j.at("context_decay");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace flashffn
