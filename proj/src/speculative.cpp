// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/speculative.hpp"

#include <random>

#include "flashffn/neuron_cache.hpp"
#include "flashffn/weight_store.hpp"

namespace flashffn {

SpeculativeSimReport simulate_speculative_reuse(const SpeculativeSimConfig& config) {
  if (config.lambda == 0) fail(ErrorKind::kUsage, "lambda must be >= 1");
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) fail(ErrorKind::kUsage, "alpha must be in (0, 1]");
  if (config.trials == 0) fail(ErrorKind::kUsage, "need at least one trial");

  const std::uint32_t d_ffn = config.stream.d_ffn;
  const std::uint32_t block = config.lambda + 1;
  LayerWeights dummy(1, d_ffn);
  InMemoryRecordSource source(std::span<const LayerWeights>(&dummy, 1), 4);
  CacheConfig cache_cfg{0, 1, d_ffn, d_ffn, config.window_k, OverflowPolicy::kShrinkWindow};

  SpeculativeSimReport report;
  report.anchor = speculative_anchor(config.lambda, config.alpha);
  report.reuse_by_anchor.assign(block, 0.0);

  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution accept(config.alpha);
  for (std::uint32_t trial = 0; trial < config.trials; ++trial) {
    synth::TopicProcess truth(config.stream, rng());
    NeuronCache warm(cache_cfg);
    for (std::uint32_t t = 0; t < config.warmup_tokens; ++t) warm.update_window(truth.next(), source);

    std::uint32_t a = 0;
    while (a < block && accept(rng)) ++a;
    report.mean_accepted += a;
    std::vector<IndexSet> drafts;
    for (std::uint32_t i = 0; i < a; ++i) drafts.push_back(truth.next());
    auto diverged = truth.fork(rng());
    diverged.scramble();
    while (drafts.size() < block) drafts.push_back(diverged.next());

    std::vector<IndexSet> next_pass;
    for (std::uint32_t i = 0; i < block; ++i) next_pass.push_back(truth.next());
    const IndexSet needed = union_of(next_pass);

    for (std::uint32_t anchor = 1; anchor <= block; ++anchor) {
      NeuronCache cache = warm;
      cache.update_speculative(drafts, static_cast<double>(anchor) / block, source);
      const double hit = static_cast<double>(set_intersection(cache.resident_set(), needed).size());
      report.reuse_by_anchor[anchor - 1] += needed.empty() ? 1.0 : hit / static_cast<double>(needed.size());
    }
  }
  for (auto& r : report.reuse_by_anchor) r /= config.trials;
  report.mean_accepted /= config.trials;
  report.anchor_reuse_mean = report.reuse_by_anchor[report.anchor - 1];
  report.keep_last_reuse_mean = report.reuse_by_anchor[block - 1];
  return report;
}

}  // namespace flashffn
