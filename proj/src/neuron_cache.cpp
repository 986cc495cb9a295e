// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/neuron_cache.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace flashffn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

}  // namespace

OverflowPolicy parse_overflow_policy(std::string_view text) {
  if (text == "shrink") return OverflowPolicy::kShrinkWindow;
  if (text == "error") return OverflowPolicy::kError;
  fail(ErrorKind::kUsage, "overflow policy must be shrink or error");
}

CacheUpdateStats& CacheUpdateStats::operator+=(const CacheUpdateStats& o) {
  deleted += o.deleted;
  inserted += o.inserted;
  element_moves += o.element_moves;
  metadata_moves += o.metadata_moves;
  bytes_fetched += o.bytes_fetched;
  window_tokens = o.window_tokens;
  shrunk_tokens += o.shrunk_tokens;
  io_seconds += o.io_seconds;
  mem_seconds += o.mem_seconds;
  return *this;
}

NeuronCache::NeuronCache(const CacheConfig& config)
    : config_(config),
      row_width_(2ull * config.d_model),
      matrix_(config.capacity * 2ull * config.d_model),
      pointer_(config.capacity),
      bias_(config.capacity),
      row_of_(config.d_ffn, -1),
      mark_(config.d_ffn, 0) {
  if (config.d_model == 0 || config.d_ffn == 0) fail(ErrorKind::kUsage, "cache dimensions must be positive");
  if (config.window_k == 0) fail(ErrorKind::kUsage, "window_k must be >= 1");
  if (config.capacity == 0 || config.capacity > config.d_ffn) fail(ErrorKind::kUsage, "capacity must be in [1, d_ffn]");
}

void NeuronCache::check_set(std::span<const NeuronIndex> set) const {
  if (!is_index_set(set)) fail(ErrorKind::kUsage, "active set must be sorted and unique");
  if (!set.empty() && set.back() >= config_.d_ffn) fail(ErrorKind::kUsage, "active neuron out of range");
}

CacheUpdateStats NeuronCache::update_window(std::span<const NeuronIndex> new_active, RecordSource& source) {
  IndexSet set(new_active.begin(), new_active.end());
  return advance(std::span<const IndexSet>(&set, 1), source);
}

CacheUpdateStats NeuronCache::update_speculative(std::span<const IndexSet> draft_sets, double alpha,
                                                 RecordSource& source) {
  if (draft_sets.size() < 2) fail(ErrorKind::kUsage, "speculative block needs lambda >= 1 (lambda + 1 sets)");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::kUsage, "acceptance ratio must be in (0, 1]");
  const auto lambda = static_cast<std::uint32_t>(draft_sets.size() - 1);
  return advance(draft_sets.first(speculative_anchor(lambda, alpha)), source);
}

CacheUpdateStats NeuronCache::advance(std::span<const IndexSet> incoming, RecordSource& source) {
  for (const auto& s : incoming) check_set(s);
  CacheUpdateStats stats;

  std::deque<IndexSet> window = history_;
  for (const auto& s : incoming) window.push_back(s);
  while (window.size() > config_.window_k) window.pop_front();

  auto mark_window = [&]() {
    std::size_t count = 0;
    for (const auto& s : window) {
      for (auto n : s) {
        if (!mark_[n]) {
          mark_[n] = 1;
          ++count;
        }
      }
    }
    return count;
  };
  auto clear_marks = [&]() {
    for (const auto& s : window)
      for (auto n : s) mark_[n] = 0;
  };

  std::size_t required = mark_window();
  while (required > config_.capacity) {
    clear_marks();
    if (config_.overflow == OverflowPolicy::kError || window.size() == 1) {
      fail(ErrorKind::kCapacity, "capacity overflow in layer " + std::to_string(config_.layer) + ": window needs " +
                                     std::to_string(required) + " rows, capacity " + std::to_string(config_.capacity));
    }
    window.pop_front();
    ++stats.shrunk_tokens;
    required = mark_window();
  }

  // Delete: residents outside the new window union, highest row first so the
  // row moved into a hole is never itself pending deletion.
  auto t_mem = Clock::now();
  std::vector<std::size_t> doomed;
  for (std::size_t r = 0; r < num_used_; ++r) {
    if (!mark_[pointer_[r]]) doomed.push_back(r);
  }
  for (auto it = doomed.rbegin(); it != doomed.rend(); ++it) {
    const std::size_t r = *it;
    const std::size_t last = num_used_ - 1;
    row_of_[pointer_[r]] = -1;
    if (r != last) {
      std::memcpy(matrix_.data() + r * row_width_, matrix_.data() + last * row_width_, row_width_ * sizeof(float));
      pointer_[r] = pointer_[last];
      bias_[r] = bias_[last];
      row_of_[pointer_[r]] = static_cast<std::int32_t>(r);
      stats.element_moves += row_width_;
      stats.metadata_moves += 2;
    }
    --num_used_;
  }
  stats.deleted = doomed.size();

  IndexSet missing;
  for (const auto& s : window) {
    for (auto n : s) {
      if (mark_[n] == 1 && row_of_[n] < 0) missing.push_back(n);
      mark_[n] = 2;  // visited
    }
  }
  clear_marks();
  std::sort(missing.begin(), missing.end());
  stats.mem_seconds += seconds_since(t_mem);

  if (!missing.empty()) {
    auto t_io = Clock::now();
    auto fetched = source.fetch(config_.layer, missing);
    stats.io_seconds += seconds_since(t_io);
    if (fetched.records.size() != missing.size()) fail(ErrorKind::kIo, "fetch returned the wrong number of records");

    t_mem = Clock::now();
    for (std::size_t i = 0; i < missing.size(); ++i) {
      const auto& rec = fetched.records[i];
      if (rec.neuron_index != missing[i] || rec.up_column.size() != config_.d_model ||
          rec.down_row.size() != config_.d_model) {
        fail(ErrorKind::kIo, "fetch returned a mismatched record");
      }
      float* row = matrix_.data() + num_used_ * row_width_;
      std::copy(rec.up_column.begin(), rec.up_column.end(), row);
      std::copy(rec.down_row.begin(), rec.down_row.end(), row + config_.d_model);
      pointer_[num_used_] = rec.neuron_index;
      bias_[num_used_] = rec.bias;
      row_of_[rec.neuron_index] = static_cast<std::int32_t>(num_used_);
      ++num_used_;
    }
    stats.mem_seconds += seconds_since(t_mem);
    stats.inserted = missing.size();
    stats.bytes_fetched = fetched.bytes_read;
  }

  history_ = std::move(window);
  stats.window_tokens = history_.size();
  return stats;
}

CacheViews NeuronCache::resident_views() const {
  CacheViews v;
  v.up = StridedRows{matrix_.data(), num_used_, config_.d_model, row_width_};
  v.down = TransposedRows{matrix_.data() + config_.d_model, config_.d_model, num_used_, row_width_};
  v.bias = std::span<const float>(bias_.data(), num_used_);
  v.pointer = std::span<const NeuronIndex>(pointer_.data(), num_used_);
  return v;
}

IndexSet NeuronCache::resident_set() const {
  return make_index_set(IndexSet(pointer_.begin(), pointer_.begin() + static_cast<std::ptrdiff_t>(num_used_)));
}

std::string NeuronCache::snapshot_json() const {
  nlohmann::json j;
  j["schema"] = "flashffn.cache_snapshot/1";
  j["layer"] = config_.layer;
  j["capacity"] = config_.capacity;
  j["window_k"] = config_.window_k;
  j["num_used"] = num_used_;
  j["pointer"] = std::vector<NeuronIndex>(pointer_.begin(), pointer_.begin() + static_cast<std::ptrdiff_t>(num_used_));
  j["last_k_active"] = std::vector<IndexSet>(history_.begin(), history_.end());
  return j.dump();
}

std::uint32_t speculative_anchor(std::uint32_t lambda, double alpha) {
  const auto block = static_cast<double>(lambda + 1);
  const auto anchor = static_cast<std::int64_t>(std::lround(alpha * block));
  return static_cast<std::uint32_t>(std::clamp<std::int64_t>(anchor, 1, lambda + 1));
}

std::size_t calibrate_capacity(std::span<const IndexSet> sets, std::uint32_t window_k, double headroom,
                               std::uint32_t d_ffn) {
  if (window_k == 0) fail(ErrorKind::kUsage, "window_k must be >= 1");
  std::size_t peak = 0;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    const std::size_t begin = t + 1 >= window_k ? t + 1 - window_k : 0;
    peak = std::max(peak, union_of(sets.subspan(begin, t + 1 - begin)).size());
  }
  const auto padded = static_cast<std::size_t>(std::ceil(static_cast<double>(peak) * (1.0 + headroom)));
  return std::clamp<std::size_t>(padded, 1, d_ffn);
}

}  // namespace flashffn
