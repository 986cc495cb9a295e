// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded generators for activation traces with known structure.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "flashffn/common.hpp"
#include "flashffn/predictor.hpp"
#include "flashffn/trace.hpp"

namespace flashffn::synth {

struct TopicOptions {
  std::uint32_t d_ffn = 512;
  std::uint32_t topic_size = 40;      // neurons tied to the current context
  double topic_fire_prob = 0.8;       // chance a topic neuron fires on a token
  std::uint32_t drift = 2;            // topic neurons replaced per token
  std::uint32_t token_specific = 6;   // Zipf-popular draws per token
  double zipf_exponent = 1.1;
};

/// Context that drifts slowly, so consecutive tokens share most of their
/// active neurons while a Zipf-popular background keeps some neurons hot.
class TopicProcess {
 public:
  TopicProcess(const TopicOptions& options, std::uint64_t seed);

  IndexSet next();
  /// Replaces the whole topic, modelling a continuation unrelated to the past.
  void scramble();
  /// Copy of this process that continues on its own random stream.
  TopicProcess fork(std::uint64_t seed) const;

 private:
  NeuronIndex draw_popular();

  TopicOptions options_;
  std::mt19937_64 rng_;
  std::vector<NeuronIndex> popularity_;  // rank -> neuron
  std::discrete_distribution<std::uint32_t> zipf_;
  std::vector<NeuronIndex> topic_;
};

struct ZipfTraceOptions {
  std::uint32_t n_tokens = 256;
  std::uint32_t n_layers = 1;
  TopicOptions topic;
  std::uint64_t seed = 1;
};

ActivationTrace zipf_correlated_trace(const ZipfTraceOptions& options);

/// Every neuron fires independently with probability p.
ActivationTrace independent_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed);

/// Neurons (2i, 2i+1) always fire together; each pair fires with probability p.
ActivationTrace paired_clique_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed);

/// Neuron 0 fires on every token; the rest fire independently with probability p.
ActivationTrace hub_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed);

/// Consecutive blocks of `clique_size` neurons fire together with probability
/// `clique_prob`; on top of that each neuron fires alone with probability `noise`.
ActivationTrace planted_clique_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, std::uint32_t clique_size,
                                     double clique_prob, double noise, std::uint64_t seed);

/// Labels from a hidden low-rank linear map: neuron i is active when
/// (x^T U V)_i > 0, with x, U and V standard normal.
std::vector<LabeledSample> low_rank_samples(std::uint32_t d_model, std::uint32_t d_ffn, std::uint32_t rank,
                                            std::uint32_t count, std::uint64_t seed);

}  // namespace flashffn::synth
