// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Preallocated per-layer DRAM cache of bundled neurons for a sliding window
// of the last k tokens.
//
// Row j of the matrix holds [up column | down row] of neuron pointer[j]; rows
// [0, num_used) are live and always equal the union of the window's predicted
// sets. Updates delete first, moving the current last row into each vacated
// slot, then append freshly fetched neurons at the end. The buffer is sized
// once at construction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "flashffn/common.hpp"
#include "flashffn/flash_reader.hpp"

namespace flashffn {

enum class OverflowPolicy {
  kShrinkWindow,  // drop the oldest window tokens until the union fits
  kError,
};

OverflowPolicy parse_overflow_policy(std::string_view text);

struct CacheConfig {
  std::uint32_t layer = 0;
  std::uint32_t d_model = 0;
  std::uint32_t d_ffn = 0;
  std::size_t capacity = 0;  // Req
  std::uint32_t window_k = 4;
  OverflowPolicy overflow = OverflowPolicy::kShrinkWindow;
};

struct CacheUpdateStats {
  std::size_t deleted = 0;
  std::size_t inserted = 0;
  std::uint64_t element_moves = 0;   // matrix scalars copied while compacting
  std::uint64_t metadata_moves = 0;  // pointer/bias entries copied while compacting
  std::uint64_t bytes_fetched = 0;
  std::size_t window_tokens = 0;     // tokens in the window after the update
  std::size_t shrunk_tokens = 0;     // tokens dropped early to fit capacity
  double io_seconds = 0.0;
  double mem_seconds = 0.0;

  CacheUpdateStats& operator+=(const CacheUpdateStats& o);
};

/// Row-major view with a row stride, no ownership.
struct StridedRows {
  const float* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t row_stride = 0;

  float operator()(std::size_t r, std::size_t c) const { return data[r * row_stride + c]; }
  std::span<const float> row(std::size_t r) const { return {data + r * row_stride, cols}; }
};

/// d_model x num_used reading of the second half of each cache row.
struct TransposedRows {
  const float* data = nullptr;
  std::size_t rows = 0;  // d_model
  std::size_t cols = 0;  // num_used
  std::size_t col_stride = 0;

  float operator()(std::size_t i, std::size_t j) const { return data[j * col_stride + i]; }
  std::span<const float> column(std::size_t j) const { return {data + j * col_stride, rows}; }
};

struct CacheViews {
  StridedRows up;      // num_used x d_model
  TransposedRows down; // d_model x num_used
  std::span<const float> bias;
  std::span<const NeuronIndex> pointer;

  std::size_t num_used() const { return pointer.size(); }
};

class NeuronCache {
 public:
  explicit NeuronCache(const CacheConfig& config);

  /// Slides the window by one token whose predicted set is `new_active`.
  CacheUpdateStats update_window(std::span<const NeuronIndex> new_active, RecordSource& source);

  /// Speculative block of lambda + 1 draft tokens. The window is advanced only
  /// up to draft token round(alpha * (lambda + 1)) (1-based), so residents stay
  /// anchored where verification is expected to stop.
  CacheUpdateStats update_speculative(std::span<const IndexSet> draft_sets, double alpha, RecordSource& source);

  CacheViews resident_views() const;
  IndexSet resident_set() const;

  const CacheConfig& config() const { return config_; }
  std::size_t num_used() const { return num_used_; }
  std::size_t capacity() const { return config_.capacity; }
  const std::deque<IndexSet>& last_k_active() const { return history_; }
  bool contains(NeuronIndex neuron) const { return row_of_[neuron] >= 0; }

  const float* buffer_address() const { return matrix_.data(); }
  std::size_t buffer_extent() const { return matrix_.size(); }

  /// JSON debug dump: pointer view, num_used and the window sets.
  std::string snapshot_json() const;

 private:
  CacheUpdateStats advance(std::span<const IndexSet> incoming, RecordSource& source);
  void check_set(std::span<const NeuronIndex> set) const;

  CacheConfig config_;
  std::size_t row_width_;
  std::vector<float> matrix_;
  std::vector<NeuronIndex> pointer_;
  std::vector<float> bias_;
  std::size_t num_used_ = 0;
  std::deque<IndexSet> history_;
  std::vector<std::int32_t> row_of_;
  std::vector<std::uint8_t> mark_;
};

/// 1-based draft position the speculative window ends on.
std::uint32_t speculative_anchor(std::uint32_t lambda, double alpha);

/// Largest windowed-union size over a calibration sequence, plus headroom,
/// capped at d_ffn.
std::size_t calibrate_capacity(std::span<const IndexSet> sets, std::uint32_t window_k, double headroom,
                               std::uint32_t d_ffn);

}  // namespace flashffn
