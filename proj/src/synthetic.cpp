// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flashffn::synth {
namespace {

std::discrete_distribution<std::uint32_t> zipf_weights(std::uint32_t n, double s) {
  std::vector<double> w(n);
  for (std::uint32_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), s);
  return {w.begin(), w.end()};
}

ActivationTrace single_layer(std::uint32_t d_ffn, std::string provenance) {
  ActivationTrace t;
  t.n_layers = 1;
  t.d_ffn = d_ffn;
  t.provenance = std::move(provenance);
  return t;
}

}  // namespace

TopicProcess::TopicProcess(const TopicOptions& options, std::uint64_t seed)
    : options_(options), rng_(seed), popularity_(options.d_ffn), zipf_(zipf_weights(options.d_ffn, options.zipf_exponent)) {
  if (options.d_ffn == 0 || options.topic_size > options.d_ffn) fail(ErrorKind::kUsage, "topic larger than d_ffn");
  std::iota(popularity_.begin(), popularity_.end(), 0);
  std::shuffle(popularity_.begin(), popularity_.end(), rng_);
  scramble();
}

NeuronIndex TopicProcess::draw_popular() { return popularity_[zipf_(rng_)]; }

void TopicProcess::scramble() {
  topic_.clear();
  std::uniform_int_distribution<NeuronIndex> any(0, options_.d_ffn - 1);
  while (topic_.size() < options_.topic_size) {
    const auto n = any(rng_);
    if (std::find(topic_.begin(), topic_.end(), n) == topic_.end()) topic_.push_back(n);
  }
}

TopicProcess TopicProcess::fork(std::uint64_t seed) const {
  TopicProcess copy = *this;
  copy.rng_.seed(seed);
  return copy;
}

IndexSet TopicProcess::next() {
  std::uniform_int_distribution<NeuronIndex> any(0, options_.d_ffn - 1);
  if (!topic_.empty()) {
    std::uniform_int_distribution<std::size_t> slot(0, topic_.size() - 1);
    for (std::uint32_t d = 0; d < options_.drift; ++d) {
      const auto n = any(rng_);
      if (std::find(topic_.begin(), topic_.end(), n) == topic_.end()) topic_[slot(rng_)] = n;
    }
  }
  std::bernoulli_distribution fires(options_.topic_fire_prob);
  std::vector<NeuronIndex> active;
  for (auto n : topic_) {
    if (fires(rng_)) active.push_back(n);
  }
  for (std::uint32_t i = 0; i < options_.token_specific; ++i) active.push_back(draw_popular());
  return make_index_set(std::move(active));
}

ActivationTrace zipf_correlated_trace(const ZipfTraceOptions& options) {
  ActivationTrace t;
  t.n_layers = options.n_layers;
  t.d_ffn = options.topic.d_ffn;
  t.provenance = "synthetic:zipf-topic seed=" + std::to_string(options.seed);
  std::vector<TopicProcess> layers;
  for (std::uint32_t l = 0; l < options.n_layers; ++l) layers.emplace_back(options.topic, options.seed * 1000003ull + l);
  for (std::uint32_t i = 0; i < options.n_tokens; ++i) {
    std::vector<IndexSet> per_layer;
    for (auto& p : layers) per_layer.push_back(p.next());
    t.append(std::move(per_layer));
  }
  return t;
}

ActivationTrace independent_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed) {
  auto t = single_layer(d_ffn, "synthetic:independent seed=" + std::to_string(seed));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution fires(p);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    IndexSet s;
    for (NeuronIndex n = 0; n < d_ffn; ++n)
      if (fires(rng)) s.push_back(n);
    t.append({std::move(s)});
  }
  return t;
}

ActivationTrace paired_clique_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed) {
  auto t = single_layer(d_ffn, "synthetic:pairs seed=" + std::to_string(seed));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution fires(p);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    IndexSet s;
    for (NeuronIndex n = 0; n + 1 < d_ffn; n += 2) {
      if (fires(rng)) {
        s.push_back(n);
        s.push_back(n + 1);
      }
    }
    t.append({std::move(s)});
  }
  return t;
}

ActivationTrace hub_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, double p, std::uint64_t seed) {
  auto t = single_layer(d_ffn, "synthetic:hub seed=" + std::to_string(seed));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution fires(p);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    IndexSet s{0};
    for (NeuronIndex n = 1; n < d_ffn; ++n)
      if (fires(rng)) s.push_back(n);
    t.append({std::move(s)});
  }
  return t;
}

ActivationTrace planted_clique_trace(std::uint32_t n_tokens, std::uint32_t d_ffn, std::uint32_t clique_size,
                                     double clique_prob, double noise, std::uint64_t seed) {
  if (clique_size == 0) fail(ErrorKind::kUsage, "clique size must be positive");
  auto t = single_layer(d_ffn, "synthetic:cliques seed=" + std::to_string(seed));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution clique_fires(clique_prob), noise_fires(noise);
  for (std::uint32_t i = 0; i < n_tokens; ++i) {
    std::vector<NeuronIndex> s;
    for (NeuronIndex base = 0; base < d_ffn; base += clique_size) {
      if (clique_fires(rng)) {
        for (NeuronIndex n = base; n < std::min(d_ffn, base + clique_size); ++n) s.push_back(n);
      }
    }
    for (NeuronIndex n = 0; n < d_ffn; ++n)
      if (noise_fires(rng)) s.push_back(n);
    t.append({make_index_set(std::move(s))});
  }
  return t;
}

std::vector<LabeledSample> low_rank_samples(std::uint32_t d_model, std::uint32_t d_ffn, std::uint32_t rank,
                                            std::uint32_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<double> u(static_cast<std::size_t>(d_model) * rank), v(static_cast<std::size_t>(rank) * d_ffn);
  for (auto& a : u) a = normal(rng);
  for (auto& a : v) a = normal(rng);
  std::vector<LabeledSample> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    LabeledSample sample;
    sample.attention_output.resize(d_model);
    for (auto& a : sample.attention_output) a = normal(rng);
    std::vector<double> z(rank, 0.0);
    for (std::uint32_t i = 0; i < d_model; ++i)
      for (std::uint32_t r = 0; r < rank; ++r) z[r] += sample.attention_output[i] * u[i * rank + r];
    for (std::uint32_t j = 0; j < d_ffn; ++j) {
      double logit = 0.0;
      for (std::uint32_t r = 0; r < rank; ++r) logit += z[r] * v[r * d_ffn + j];
      if (logit > 0.0) sample.active.push_back(j);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace flashffn::synth
