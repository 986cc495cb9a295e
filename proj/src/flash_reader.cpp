// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/flash_reader.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include <omp.h>

namespace flashffn {
namespace {

// Direct I/O wants offsets, lengths and buffers on logical-block boundaries.
constexpr std::uint64_t kDirectIoAlignment = 4096;

struct FreeDeleter {
  void operator()(std::byte* p) const { std::free(p); }
};
using AlignedBuffer = std::unique_ptr<std::byte, FreeDeleter>;

AlignedBuffer aligned_buffer(std::uint64_t bytes) {
  const auto size = std::max<std::uint64_t>(kDirectIoAlignment,
                                            (bytes + kDirectIoAlignment - 1) / kDirectIoAlignment * kDirectIoAlignment);
  void* p = std::aligned_alloc(kDirectIoAlignment, size);
  if (!p) throw std::bad_alloc();
  return AlignedBuffer(static_cast<std::byte*>(p));
}

/// Reads up to `length` bytes at `offset`; stops early only at end of file.
std::uint64_t pread_full(int fd, std::byte* dst, std::uint64_t length, std::uint64_t offset) {
  std::uint64_t done = 0;
  while (done < length) {
    const auto n = ::pread(fd, dst + done, length - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorKind::kIo, std::string("I/O failure: pread: ") + std::strerror(errno));
    }
    if (n == 0) break;
    done += static_cast<std::uint64_t>(n);
  }
  return done;
}

struct OpenedFile {
  int fd = -1;
  bool direct = false;
};

OpenedFile open_for_read(const std::filesystem::path& path, BypassMode mode) {
  OpenedFile f;
  if (mode != BypassMode::kOff) {
#if defined(__linux__) && defined(O_DIRECT)
    f.fd = ::open(path.c_str(), O_RDONLY | O_DIRECT);
    if (f.fd >= 0) {
      f.direct = true;
      return f;
    }
#elif defined(__APPLE__)
    f.fd = ::open(path.c_str(), O_RDONLY);
    if (f.fd >= 0 && ::fcntl(f.fd, F_NOCACHE, 1) == 0) {
      f.direct = true;
      return f;
    }
    if (f.fd >= 0) ::close(f.fd);
#endif
    if (mode == BypassMode::kRequire) {
      fail(ErrorKind::kIo, "cache bypass required but unsupported for " + path.string());
    }
    std::cerr << "warning: cache bypass unavailable for " << path.string() << ", using buffered reads\n";
  }
  f.fd = ::open(path.c_str(), O_RDONLY);
  if (f.fd < 0) fail(ErrorKind::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
#if defined(POSIX_FADV_DONTNEED)
  if (mode != BypassMode::kOff) ::posix_fadvise(f.fd, 0, 0, POSIX_FADV_DONTNEED);
#endif
  return f;
}

}  // namespace

BypassMode parse_bypass_mode(std::string_view text) {
  if (text == "off") return BypassMode::kOff;
  if (text == "try") return BypassMode::kTry;
  if (text == "require") return BypassMode::kRequire;
  fail(ErrorKind::kUsage, "bypass mode must be require, try or off");
}

std::string_view to_string(BypassMode mode) {
  switch (mode) {
    case BypassMode::kOff: return "off";
    case BypassMode::kTry: return "try";
    case BypassMode::kRequire: return "require";
  }
  return "off";
}

std::size_t ReadPlan::neuron_count() const {
  std::size_t n = 0;
  for (const auto& r : runs) n += r.neurons.size();
  return n;
}

ReadPlan plan_reads(std::span<const NeuronIndex> neuron_indices, const StoreManifest& manifest,
                    std::uint32_t layer, std::uint32_t gap_threshold) {
  if (layer >= manifest.n_layers) fail(ErrorKind::kUsage, "layer out of range");
  if (!is_index_set(neuron_indices)) fail(ErrorKind::kUsage, "neuron indices must be sorted and unique");
  ReadPlan plan;
  plan.layer = layer;
  plan.gap_threshold = gap_threshold;
  plan.record_stride = manifest.record_stride;
  NeuronIndex run_last = 0;
  for (NeuronIndex idx : neuron_indices) {
    if (idx >= manifest.d_ffn) {
      fail(ErrorKind::kUsage, "index out of range: " + std::to_string(idx) + " >= " + std::to_string(manifest.d_ffn));
    }
    if (!plan.runs.empty() && static_cast<std::uint64_t>(idx) - run_last - 1 <= gap_threshold) {
      plan.runs.back().neurons.push_back(idx);
    } else {
      ReadRun run;
      run.first_record = idx;
      run.start_offset = manifest.record_offset(layer, idx);
      run.neurons.push_back(idx);
      plan.runs.push_back(std::move(run));
    }
    run_last = idx;
  }
  for (auto& run : plan.runs) {
    run.length = (static_cast<std::uint64_t>(run.neurons.back() - run.first_record) + 1) * manifest.record_stride;
    plan.total_bytes += run.length;
  }
  return plan;
}

FlashReader::FlashReader(const std::filesystem::path& path, ReaderOptions options)
    : path_(path), options_(options), manifest_(read_manifest(path)) {
  if (options_.workers == 0) fail(ErrorKind::kUsage, "workers must be >= 1");
  auto f = open_for_read(path, options_.bypass);
  fd_ = f.fd;
  direct_ = f.direct;
}

FlashReader::~FlashReader() {
  if (fd_ >= 0) ::close(fd_);
}

FetchResult FlashReader::fetch(const ReadPlan& plan, unsigned workers) const {
  if (workers == 0) fail(ErrorKind::kUsage, "workers must be >= 1");
  FetchResult result;
  result.bytes_read = plan.total_bytes;
  const auto n_runs = static_cast<std::int64_t>(plan.runs.size());
  if (n_runs == 0) return result;

  std::vector<std::size_t> first_out(plan.runs.size() + 1, 0);
  for (std::size_t r = 0; r < plan.runs.size(); ++r) first_out[r + 1] = first_out[r] + plan.runs[r].neurons.size();
  result.records.resize(first_out.back());
  std::vector<std::exception_ptr> errors(plan.runs.size());

  const int team = static_cast<int>(std::min<std::int64_t>(workers, n_runs));
#pragma omp parallel for schedule(dynamic, 1) num_threads(team)
  for (std::int64_t r = 0; r < n_runs; ++r) {
    try {
      const auto& run = plan.runs[static_cast<std::size_t>(r)];
      const std::uint64_t align = direct_ ? std::max<std::uint64_t>(kDirectIoAlignment, manifest_.record_alignment)
                                          : manifest_.record_alignment;
      const std::uint64_t begin = run.start_offset / align * align;
      const std::uint64_t end = (run.start_offset + run.length + align - 1) / align * align;
      auto buf = aligned_buffer(end - begin);
      const auto got = pread_full(fd_, buf.get(), end - begin, begin);
      const std::uint64_t lead = run.start_offset - begin;
      if (got < lead + run.length - (manifest_.record_stride - manifest_.payload_bytes())) {
        fail(ErrorKind::kIo, "short read at offset " + std::to_string(run.start_offset));
      }
      std::size_t out = first_out[static_cast<std::size_t>(r)];
      for (NeuronIndex idx : run.neurons) {
        const std::uint64_t rel = lead + static_cast<std::uint64_t>(idx - run.first_record) * manifest_.record_stride;
        result.records[out++] = decode_record(
            manifest_, idx, std::span<const std::byte>(buf.get() + rel, manifest_.payload_bytes()));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

FetchResult FlashReader::fetch(std::uint32_t layer, std::span<const NeuronIndex> neurons) {
  return fetch(plan_reads(neurons, manifest_, layer, options_.gap_threshold), options_.workers);
}

FetchResult InMemoryRecordSource::fetch(std::uint32_t layer, std::span<const NeuronIndex> neurons) {
  if (layer >= layers_.size()) fail(ErrorKind::kUsage, "layer out of range");
  const auto& L = layers_[layer];
  ++calls_;
  FetchResult out;
  out.records.reserve(neurons.size());
  for (auto n : neurons) {
    if (n >= L.d_ffn) fail(ErrorKind::kUsage, "index out of range: " + std::to_string(n));
    BundledRecord rec;
    rec.neuron_index = n;
    auto up = L.up_row(n);
    auto down = L.down_row(n);
    rec.up_column.assign(up.begin(), up.end());
    rec.down_row.assign(down.begin(), down.end());
    rec.bias = L.bias[n];
    out.records.push_back(std::move(rec));
  }
  out.bytes_read = neurons.size() * record_stride_;
  return out;
}

void ThroughputGrid::validate() const {
  if (gib_per_s.size() != chunk_sizes.size() * thread_counts.size()) {
    fail(ErrorKind::kInvariant, "invariant violation: throughput grid shape");
  }
  for (double v : gib_per_s) {
    if (!(v > 0.0)) fail(ErrorKind::kInvariant, "invariant violation: non-positive throughput");
  }
}

std::string ThroughputGrid::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "chunk_bytes,threads,gib_per_s\n";
  for (std::size_t c = 0; c < chunk_sizes.size(); ++c) {
    for (std::size_t t = 0; t < thread_counts.size(); ++t) {
      out << chunk_sizes[c] << ',' << thread_counts[t] << ',' << at(c, t) << '\n';
    }
  }
  return out.str();
}

ThroughputGrid ThroughputGrid::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("chunk_bytes,threads,gib_per_s", 0) != 0) {
    fail(ErrorKind::kData, "throughput CSV: missing chunk_bytes,threads,gib_per_s header");
  }
  struct Row {
    std::uint64_t chunk;
    unsigned threads;
    double value;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> r.chunk >> c1 >> r.threads >> c2 >> r.value) || c1 != ',' || c2 != ',') {
      fail(ErrorKind::kData, "throughput CSV: bad row '" + line + "'");
    }
    rows.push_back(r);
  }
  ThroughputGrid g;
  for (const auto& r : rows) {
    if (std::find(g.chunk_sizes.begin(), g.chunk_sizes.end(), r.chunk) == g.chunk_sizes.end()) g.chunk_sizes.push_back(r.chunk);
    if (std::find(g.thread_counts.begin(), g.thread_counts.end(), r.threads) == g.thread_counts.end()) {
      g.thread_counts.push_back(r.threads);
    }
  }
  g.gib_per_s.assign(g.chunk_sizes.size() * g.thread_counts.size(), 0.0);
  std::vector<std::uint8_t> seen(g.gib_per_s.size(), 0);
  for (const auto& r : rows) {
    const auto ci = static_cast<std::size_t>(std::find(g.chunk_sizes.begin(), g.chunk_sizes.end(), r.chunk) - g.chunk_sizes.begin());
    const auto ti = static_cast<std::size_t>(std::find(g.thread_counts.begin(), g.thread_counts.end(), r.threads) -
                                             g.thread_counts.begin());
    const std::size_t cell = ci * g.thread_counts.size() + ti;
    if (seen[cell]++) fail(ErrorKind::kData, "throughput CSV: duplicate cell");
    g.gib_per_s[cell] = r.value;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) fail(ErrorKind::kData, "throughput CSV: incomplete grid");
  g.validate();
  return g;
}

ThroughputGrid probe_throughput(const std::filesystem::path& path, const ProbeOptions& options) {
  if (options.chunk_sizes.empty() || options.thread_counts.empty()) fail(ErrorKind::kUsage, "empty probe grid");
  if (!(options.seconds_per_cell > 0.0)) fail(ErrorKind::kUsage, "probe duration must be positive");
  const auto file_size = std::filesystem::file_size(path);
  for (auto c : options.chunk_sizes) {
    if (c == 0) fail(ErrorKind::kUsage, "chunk size must be positive");
    if (c > file_size) {
      fail(ErrorKind::kUsage, "file too small: chunk " + std::to_string(c) + " exceeds file size " + std::to_string(file_size));
    }
  }
  const auto file = open_for_read(path, options.bypass);
  struct Closer {
    int fd;
    ~Closer() { ::close(fd); }
  } closer{file.fd};

  ThroughputGrid grid;
  grid.chunk_sizes = options.chunk_sizes;
  grid.thread_counts = options.thread_counts;
  grid.bypass_cache = file.direct;
  grid.gib_per_s.reserve(grid.chunk_sizes.size() * grid.thread_counts.size());

  for (auto chunk : options.chunk_sizes) {
    // Offsets step by min(chunk, 4 KiB), or 4 KiB under direct I/O.
    const std::uint64_t align = file.direct ? kDirectIoAlignment : std::min<std::uint64_t>(chunk, kDirectIoAlignment);
    const std::uint64_t read_len = file.direct ? (chunk + kDirectIoAlignment - 1) / kDirectIoAlignment * kDirectIoAlignment : chunk;
    const std::uint64_t slots = (file_size - std::min(file_size, read_len)) / align + 1;
    for (auto threads : options.thread_counts) {
      if (threads == 0) fail(ErrorKind::kUsage, "thread count must be positive");
      std::atomic<std::uint64_t> total{0};
      std::exception_ptr error;
      const auto start = std::chrono::steady_clock::now();
      const auto deadline = start + std::chrono::duration<double>(options.seconds_per_cell);
#pragma omp parallel num_threads(static_cast<int>(threads))
      {
        std::mt19937_64 rng(options.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(omp_get_thread_num()) +
                            chunk * 31 + threads);
        std::uniform_int_distribution<std::uint64_t> pick(0, slots - 1);
        auto buf = aligned_buffer(read_len);
        std::uint64_t local = 0;
        try {
          while (std::chrono::steady_clock::now() < deadline) {
            const auto off = pick(rng) * align;
            local += std::min<std::uint64_t>(pread_full(file.fd, buf.get(), read_len, off), chunk);
          }
        } catch (...) {
#pragma omp critical(probe_error)
          error = std::current_exception();
        }
        total += local;
      }
      if (error) std::rethrow_exception(error);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      grid.gib_per_s.push_back(static_cast<double>(total.load()) / secs / static_cast<double>(1ull << 30));
    }
  }
  grid.validate();
  return grid;
}

void write_probe_file(const std::filesystem::path& path, std::uint64_t bytes, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> block(1 << 16);
  std::uint64_t left = bytes;
  while (left > 0) {
    for (auto& w : block) w = rng();
    const auto n = std::min<std::uint64_t>(left, block.size() * sizeof(std::uint64_t));
    out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(n));
    left -= n;
  }
  if (!out) fail(ErrorKind::kIo, "write failure on " + path.string());
}

}  // namespace flashffn
