// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Small seeded transformer-shaped model. Embeddings, the attention stand-in
// and the output head stay in memory; the FFN layers are what gets packed
// into the flash store.
//
// Per layer:  x = tanh(W_l (h + c_l)), with x[0] pinned to 1
//             c_l <- decay * c_l + (1 - decay) * h
//             h <- rmsnorm(h + x + ffn_l(x))

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flashffn/weight_store.hpp"

namespace flashffn {

struct ToyModelConfig {
  std::uint32_t d_model = 64;
  std::uint32_t d_ffn = 256;
  std::uint32_t n_layers = 4;
  std::uint32_t vocab = 256;
  std::uint32_t scalar_width = 4;
  std::uint64_t seed = 1;
  float ffn_bias = -1.0f;           // shared offset pushing most neurons below zero
  float neuron_scale_sigma = 0.35f; // lognormal spread of per-neuron input gain
  float context_decay = 0.9f;

  void validate() const;
};

enum class Sampling { kGreedy, kNucleus };

Sampling parse_sampling(std::string_view text);

class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& config);

  const ToyModelConfig& config() const { return config_; }
  const std::vector<LayerWeights>& ffn_layers() const { return ffn_; }

  /// Running per-layer context of one sequence.
  struct State {
    std::vector<std::vector<float>> context;
  };
  State initial_state() const;

  std::vector<float> embed(std::uint32_t token) const;
  /// Attention stand-in output for layer `layer`; advances that layer's context.
  std::vector<float> attention(std::uint32_t layer, std::span<const float> h, State& state) const;
  void residual(std::vector<float>& h, std::span<const float> x, std::span<const float> y) const;
  std::uint32_t next_token(std::span<const float> h, Sampling sampling, std::mt19937_64& rng) const;

 private:
  ToyModelConfig config_;
  std::vector<float> embeddings_;           // vocab x d_model
  std::vector<std::vector<float>> attn_;    // per layer d_model x d_model
  std::vector<LayerWeights> ffn_;
};

// model.json holds the config; resident weights are regenerated from the seed.
void write_model_config(const std::filesystem::path& path, const ToyModelConfig& config);
ToyModelConfig read_model_config(const std::filesystem::path& path);

}  // namespace flashffn
