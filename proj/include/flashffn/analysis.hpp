// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Offline trace analytics: neuron coactivation, the closest-friend bundling
// experiment and per-layer sparsity series.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flashffn/common.hpp"
#include "flashffn/trace.hpp"

namespace flashffn {

/// How a joint count co(i, j) becomes a probability.
///   kAnchor  co(i, j) / activity(i)                      (default)
///   kUnion   co(i, j) / (activity(i) + activity(j) - co(i, j))
enum class CoactivationNorm { kAnchor, kUnion };

CoactivationNorm parse_coactivation_norm(std::string_view text);

inline constexpr std::size_t kFriendListLength = 8;

struct CoactivationStats {
  std::uint32_t d_ffn = 0;
  std::uint64_t n_tokens = 0;
  CoactivationNorm norm = CoactivationNorm::kAnchor;
  std::vector<std::uint32_t> activity;          // tokens each neuron fired on
  std::vector<std::uint32_t> joint;             // d_ffn x d_ffn, symmetric, diagonal = activity
  std::vector<std::vector<NeuronIndex>> friends;  // best first, ties to the lower index

  std::uint32_t count(NeuronIndex i, NeuronIndex j) const { return joint[static_cast<std::size_t>(i) * d_ffn + j]; }
  double probability(NeuronIndex i, NeuronIndex j) const;
  NeuronIndex closest_friend(NeuronIndex i) const { return friends[i].front(); }
  /// Per neuron, the probability with its rank-th friend (1-based); NaN for silent neurons.
  std::vector<double> friend_probabilities(std::size_t rank) const;
  /// Mean log-log slope of each active neuron's sorted coactivation probabilities against rank.
  double power_law_slope() const;
  /// histogram[b] = neurons whose activity count falls in [2^b - 1, 2^(b+1) - 1).
  std::vector<std::uint64_t> activity_histogram() const;
};

/// Joint counts: the serial reference counts pairs token by token; the
/// parallel kernel ANDs per-neuron token bitsets.
std::vector<std::uint32_t> coactivation_counts_serial(std::span<const IndexSet> sets, std::uint32_t d_ffn);
std::vector<std::uint32_t> coactivation_counts_parallel(std::span<const IndexSet> sets, std::uint32_t d_ffn);

CoactivationStats coactivation_matrix(const ActivationTrace& trace, std::uint32_t layer,
                                      CoactivationNorm norm = CoactivationNorm::kAnchor);

/// Loading every predicted neuron together with its closest friend.
/// bundled_bytes = baseline_bytes + repeat_bytes + unneeded_bytes exactly.
struct BundlingCost {
  std::uint64_t baseline_bytes = 0;  // each predicted neuron once
  std::uint64_t bundled_bytes = 0;
  std::uint64_t repeat_bytes = 0;    // neurons loaded again within one token
  std::uint64_t unneeded_bytes = 0;  // friends that were not predicted
  std::uint64_t baseline_reads = 0;
  std::uint64_t bundled_reads = 0;
  double redundancy = 0.0;           // bundled / baseline, 0 when nothing loads
};

BundlingCost closest_friend_bundling_cost(const ActivationTrace& trace, std::uint32_t layer,
                                          const CoactivationStats& stats, std::uint64_t record_bytes);

/// Size of the union of the last k sets at every token, [token][layer].
std::vector<std::vector<std::size_t>> windowed_union_sizes(const ActivationTrace& trace, std::uint32_t k);

struct SparsityReport {
  std::uint32_t n_layers = 0;
  std::uint32_t d_ffn = 0;
  // [token][layer] fractions of d_ffn; empty when the input was not given
  std::vector<std::vector<double>> active;
  std::vector<std::vector<double>> predicted;
  std::vector<std::vector<double>> cached;

  std::vector<double> layer_mean(const std::vector<std::vector<double>>& series) const;
  /// token,layer,active_fraction,predicted_fraction,cached_fraction
  std::string to_csv() const;
  /// schema "flashffn.sparsity/1": per-layer means
  std::string to_json() const;
};

struct SparsityInputs {
  const ActivationTrace* truth = nullptr;
  const ActivationTrace* predicted = nullptr;
  const std::vector<std::vector<std::size_t>>* cached_rows = nullptr;  // [token][layer]
};

SparsityReport sparsity_report(const SparsityInputs& inputs);

}  // namespace flashffn
