// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flashffn/common.hpp"
#include "flashffn/weight_store.hpp"

namespace flashffn {

/// How hard to try to keep reads out of the OS page cache.
///   kOff      buffered reads
///   kTry      direct I/O when the filesystem allows it, else buffered with a warning
///   kRequire  direct I/O or an error
enum class BypassMode { kOff, kTry, kRequire };

BypassMode parse_bypass_mode(std::string_view text);
std::string_view to_string(BypassMode mode);

struct ReadRun {
  std::uint64_t start_offset = 0;
  std::uint64_t length = 0;
  std::vector<NeuronIndex> neurons;  // requested neurons inside this run, ascending
  NeuronIndex first_record = 0;      // record index at start_offset
};

struct ReadPlan {
  std::uint32_t layer = 0;
  std::uint32_t gap_threshold = 0;
  std::uint64_t record_stride = 0;
  std::vector<ReadRun> runs;
  std::uint64_t total_bytes = 0;

  std::size_t neuron_count() const;
};

/// Coalesces requested records into contiguous runs. Two requested neurons end
/// up in one run when at most `gap_threshold` unrequested records sit between
/// them; those gap records are read and thrown away.
ReadPlan plan_reads(std::span<const NeuronIndex> neuron_indices, const StoreManifest& manifest,
                    std::uint32_t layer, std::uint32_t gap_threshold);

struct FetchResult {
  std::vector<BundledRecord> records;  // ascending neuron order
  std::uint64_t bytes_read = 0;
};

/// Anything that can hand the cache a batch of bundled records.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual FetchResult fetch(std::uint32_t layer, std::span<const NeuronIndex> neurons) = 0;
  virtual std::uint64_t record_stride() const = 0;
};

/// Serves records straight from dense in-memory layers; bytes are charged
/// at `record_stride` per record, as a gap-free read plan would.
class InMemoryRecordSource final : public RecordSource {
 public:
  InMemoryRecordSource(std::span<const LayerWeights> layers, std::uint64_t record_stride)
      : layers_(layers), record_stride_(record_stride) {}

  FetchResult fetch(std::uint32_t layer, std::span<const NeuronIndex> neurons) override;
  std::uint64_t record_stride() const override { return record_stride_; }
  std::uint64_t calls() const { return calls_; }

 private:
  std::span<const LayerWeights> layers_;
  std::uint64_t record_stride_;
  std::uint64_t calls_ = 0;
};

struct ReaderOptions {
  unsigned workers = 32;
  std::uint32_t gap_threshold = 0;
  BypassMode bypass = BypassMode::kOff;
};

/// Reads bundled records from an immutable store. Runs are spread over a
/// worker team with dynamic dispatch; results come back in plan order.
class FlashReader final : public RecordSource {
 public:
  explicit FlashReader(const std::filesystem::path& path, ReaderOptions options = {});
  ~FlashReader() override;
  FlashReader(const FlashReader&) = delete;
  FlashReader& operator=(const FlashReader&) = delete;

  const StoreManifest& manifest() const { return manifest_; }
  const ReaderOptions& options() const { return options_; }
  bool direct_io() const { return direct_; }

  FetchResult fetch(const ReadPlan& plan, unsigned workers) const;
  FetchResult fetch(std::uint32_t layer, std::span<const NeuronIndex> neurons) override;
  std::uint64_t record_stride() const override { return manifest_.record_stride; }

 private:
  std::filesystem::path path_;
  ReaderOptions options_;
  StoreManifest manifest_;
  int fd_ = -1;
  bool direct_ = false;
};

struct ThroughputGrid {
  std::vector<std::uint64_t> chunk_sizes;
  std::vector<unsigned> thread_counts;
  std::vector<double> gib_per_s;  // chunk-major: [chunk][thread]
  bool bypass_cache = false;

  double at(std::size_t chunk_index, std::size_t thread_index) const {
    return gib_per_s[chunk_index * thread_counts.size() + thread_index];
  }
  void validate() const;
  std::string to_csv() const;
  /// Parses what to_csv writes; rows may come in any order but must fill the grid.
  static ThroughputGrid from_csv(const std::string& text);
};

struct ProbeOptions {
  std::vector<std::uint64_t> chunk_sizes{4096, 16384, 32768, 65536, 262144};
  std::vector<unsigned> thread_counts{1, 2, 4, 8, 16, 32};
  double seconds_per_cell = 0.25;
  BypassMode bypass = BypassMode::kTry;
  std::uint64_t seed = 1;
};

/// Random aligned reads of each chunk size with each thread count; one cell
/// = bytes transferred / wall time over the cell's duration.
ThroughputGrid probe_throughput(const std::filesystem::path& path, const ProbeOptions& options);

/// Writes `bytes` of pseudo-random data, for probing without a real store.
void write_probe_file(const std::filesystem::path& path, std::uint64_t bytes, std::uint64_t seed = 1);

}  // namespace flashffn
