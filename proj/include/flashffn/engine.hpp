// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Token loop over the toy model with flash-backed sparse FFNs.
//
// For each token and layer: attention stand-in -> predictor -> cache window
// update (flash reads for missing neurons) -> sparse FFN over resident rows.
// Time is split into I/O (record fetches), memory management (cache
// compaction and insertion) and compute (everything else on the token path).

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flashffn/flash_reader.hpp"
#include "flashffn/neuron_cache.hpp"
#include "flashffn/predictor.hpp"
#include "flashffn/toy_model.hpp"
#include "flashffn/trace.hpp"

namespace flashffn {

std::vector<float> sparse_ffn_forward(std::span<const float> x, const CacheViews& views);
std::vector<float> dense_oracle_forward(std::span<const float> x, const LayerWeights& weights);
std::vector<float> masked_dense_forward(std::span<const float> x, const LayerWeights& weights,
                                        std::span<const NeuronIndex> keep);
/// Neurons whose pre-activation is strictly positive.
IndexSet true_active_set(std::span<const float> x, const LayerWeights& weights);

struct TokenStep {
  std::uint32_t layer = 0;
  std::vector<float> attention_output;
  IndexSet predicted_set;
  std::vector<float> ffn_output;
  CacheUpdateStats stats;
  double compute_ms = 0.0;
};

struct TokenRecord {
  std::uint32_t position = 0;
  std::uint32_t token = 0;
  bool prompt = false;
  double io_ms = 0.0;
  double mem_ms = 0.0;
  double compute_ms = 0.0;
  double total_ms = 0.0;  // io + mem + compute
  double wall_ms = 0.0;
  std::uint64_t bytes_fetched = 0;
  std::size_t predicted_neurons = 0;  // summed over layers
  std::size_t cached_neurons = 0;
  std::size_t deleted = 0;
  std::size_t inserted = 0;
  std::uint64_t element_moves = 0;
  std::vector<TokenStep> steps;  // filled when EngineOptions::keep_steps
};

struct EngineOptions {
  std::uint32_t window_k = 4;
  double req_headroom = 0.1;
  OverflowPolicy overflow = OverflowPolicy::kShrinkWindow;
  std::vector<std::size_t> capacities;  // per layer; empty = calibrate first
  std::uint32_t calibration_tokens = 64;
  std::uint64_t calibration_seed = 7;
  std::vector<std::uint32_t> prompt;    // empty = one seeded start token
  std::uint32_t n_tokens = 16;          // generated after the prompt
  Sampling sampling = Sampling::kGreedy;
  std::uint64_t seed = 1;
  bool keep_steps = false;
  /// Dense weights used only to record ground-truth activations, off the timed path.
  const std::vector<LayerWeights>* oracle = nullptr;
};

struct GenerationResult {
  std::vector<std::uint32_t> tokens;
  std::vector<TokenRecord> records;
  ActivationTrace predicted;
  ActivationTrace truth;  // empty unless an oracle was given
  std::vector<std::vector<std::size_t>> cached_rows;  // [token][layer]
  std::vector<std::size_t> capacities;
  std::uint32_t window_k = 0;
  std::uint64_t record_stride = 0;
};

/// Peak window union of a nucleus-sampled run that starts with the same prompt.
std::vector<std::size_t> calibrate_capacities(const ToyModel& model, RecordSource& source,
                                              std::span<const PredictorParams> predictors,
                                              const EngineOptions& options);

GenerationResult run_generation(const ToyModel& model, RecordSource& source,
                                std::span<const PredictorParams> predictors, EngineOptions options);

/// Dense-path samples (attention output, true active set) for every layer,
/// indexed [layer][sample].
std::vector<std::vector<LabeledSample>> collect_training_samples(const ToyModel& model, std::uint32_t n_tokens,
                                                                 std::uint64_t seed,
                                                                 Sampling sampling = Sampling::kNucleus);

// Per-token JSONL: a {"schema":"flashffn.run_tokens/1"} header line, then one
// object per token. Summary JSON: schema "flashffn.run_summary/1".
void write_token_records(std::ostream& out, const GenerationResult& result);
std::string summary_json(const GenerationResult& result);

}  // namespace flashffn
