// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>
#include <set>

#include <doctest.h>

#include "flashffn/flash_reader.hpp"
#include "flashffn/weight_store.hpp"
#include "test_util.hpp"

using namespace flashffn;
using flashffn::testing::TempDir;

namespace {

struct Interval {
  std::uint64_t first, last;
};

// Sort-and-sweep merge over closed record intervals.
std::vector<Interval> merge_intervals(std::vector<NeuronIndex> idx, std::uint32_t gap) {
  std::sort(idx.begin(), idx.end());
  std::vector<Interval> out;
  for (auto i : idx) {
    if (!out.empty() && i <= out.back().last + gap + 1) {
      out.back().last = std::max<std::uint64_t>(out.back().last, i);
    } else {
      out.push_back({i, i});
    }
  }
  return out;
}

IndexSet random_indices(std::size_t count, std::uint32_t d_ffn, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::set<NeuronIndex> s;
  while (s.size() < count) s.insert(static_cast<NeuronIndex>(rng() % d_ffn));
  return {s.begin(), s.end()};
}

void check_plan_shape(const ReadPlan& plan, std::span<const NeuronIndex> requested, const StoreManifest& m) {
  std::vector<NeuronIndex> covered;
  std::uint64_t total = 0, prev_end = 0;
  for (const auto& run : plan.runs) {
    CHECK(run.start_offset >= prev_end);
    prev_end = run.start_offset + run.length;
    total += run.length;
    const std::uint64_t records = run.length / m.record_stride;
    const std::uint64_t segments = merge_intervals(run.neurons, 0).size();
    CHECK(records - run.neurons.size() <= static_cast<std::uint64_t>(plan.gap_threshold) * (segments - 1));
    covered.insert(covered.end(), run.neurons.begin(), run.neurons.end());
  }
  CHECK(total == plan.total_bytes);
  CHECK(std::equal(covered.begin(), covered.end(), requested.begin(), requested.end()));
}

}  // namespace

TEST_SUITE("flash_reader") {

TEST_CASE("contiguous indices make one run") {
  const auto m = make_manifest(4, 16, 1, {4, 64});
  const IndexSet idx{3, 4, 5};
  const auto plan = plan_reads(idx, m, 0, 0);
  REQUIRE(plan.runs.size() == 1);
  CHECK(plan.runs[0].length == 3 * m.record_stride);
  CHECK(plan.runs[0].start_offset == m.record_offset(0, 3));
}

TEST_CASE("gap threshold merges across one unrequested record") {
  const auto m = make_manifest(4, 16, 2, {4, 64});
  const IndexSet idx{3, 5};
  CHECK(plan_reads(idx, m, 1, 0).runs.size() == 2);
  const auto merged = plan_reads(idx, m, 1, 1);
  REQUIRE(merged.runs.size() == 1);
  CHECK(merged.runs[0].length == 3 * m.record_stride);
  CHECK(merged.runs[0].neurons == std::vector<NeuronIndex>{3, 5});
}

TEST_CASE("total bytes match an interval-merge oracle") {
  const auto m = make_manifest(1, 16384, 1, {4, 4});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto idx = random_indices(1000, 16384, seed);
    for (std::uint32_t gap : {0u, 1u, 2u, 7u}) {
      const auto plan = plan_reads(idx, m, 0, gap);
      const auto oracle = merge_intervals(idx, gap);
      std::uint64_t bytes = 0;
      for (const auto& iv : oracle) bytes += (iv.last - iv.first + 1) * m.record_stride;
      CHECK(plan.total_bytes == bytes);
      CHECK(plan.runs.size() == oracle.size());
      check_plan_shape(plan, idx, m);
    }
  }
}

TEST_CASE("runs at gap 0 equal maximal contiguous intervals") {
  const auto m = make_manifest(1, 4096, 1, {4, 4});
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = flashffn::testing::random_subset(4096, 0.3, rng);
    std::size_t intervals = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) intervals += (i == 0 || idx[i] != idx[i - 1] + 1);
    CHECK(plan_reads(idx, m, 0, 0).runs.size() == intervals);
  }
}

TEST_CASE("plan errors") {
  const auto m = make_manifest(4, 16, 1, {4, 64});
  const IndexSet out_of_range{2, 16};
  CHECK_THROWS_WITH_AS(plan_reads(out_of_range, m, 0, 0), doctest::Contains("index out of range"), Error);
  const std::vector<NeuronIndex> unsorted{5, 2};
  CHECK_THROWS_AS(plan_reads(unsorted, m, 0, 0), Error);
  CHECK_THROWS_AS(plan_reads(IndexSet{}, m, 1, 0), Error);
  CHECK(plan_reads(IndexSet{}, m, 0, 0).runs.empty());
}

TEST_CASE("fetch content is independent of workers, gaps and bypass") {
  TempDir dir("fr");
  const auto layers = flashffn::testing::random_layers(2, 24, 300, 11);
  pack_store(dir / "s.fnsb", layers, {4, 128});
  const auto dense = unpack_store(dir / "s.fnsb");
  std::mt19937_64 rng(12);
  FlashReader buffered(dir / "s.fnsb", {4, 0, BypassMode::kOff});
  FlashReader bypass(dir / "s.fnsb", {4, 0, BypassMode::kTry});
  for (int trial = 0; trial < 10; ++trial) {
    const std::uint32_t layer = trial % 2;
    const auto idx = flashffn::testing::random_subset(300, 0.15, rng);
    const auto reference = buffered.fetch(plan_reads(idx, buffered.manifest(), layer, 0), 1);
    REQUIRE(reference.records.size() == idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& rec = reference.records[r];
      CHECK(rec.neuron_index == idx[r]);
      const auto up = dense[layer].up_row(idx[r]);
      const auto down = dense[layer].down_row(idx[r]);
      CHECK(std::equal(up.begin(), up.end(), rec.up_column.begin(), rec.up_column.end()));
      CHECK(std::equal(down.begin(), down.end(), rec.down_row.begin(), rec.down_row.end()));
      CHECK(rec.bias == dense[layer].bias[idx[r]]);
    }
    for (std::uint32_t gap : {0u, 1u, 3u}) {
      for (unsigned workers : {1u, 32u}) {
        const auto plan = plan_reads(idx, buffered.manifest(), layer, gap);
        CHECK(buffered.fetch(plan, workers).records == reference.records);
        CHECK(bypass.fetch(plan, workers).records == reference.records);
        CHECK(buffered.fetch(plan, workers).bytes_read == plan.total_bytes);
      }
    }
  }
}

TEST_CASE("empty plan reads nothing") {
  TempDir dir("fr");
  pack_store(dir / "s.fnsb", flashffn::testing::random_layers(1, 4, 8, 1), {4, 64});
  FlashReader reader(dir / "s.fnsb");
  const auto r = reader.fetch(0, IndexSet{});
  CHECK(r.records.empty());
  CHECK(r.bytes_read == 0);
}

TEST_CASE("in-memory source agrees with the file reader") {
  TempDir dir("fr");
  const auto layers = flashffn::testing::random_layers(2, 8, 40, 3);
  pack_store(dir / "s.fnsb", layers, {4, 64});
  FlashReader reader(dir / "s.fnsb", {8, 0, BypassMode::kOff});
  InMemoryRecordSource memory(layers, reader.record_stride());
  const IndexSet idx{0, 1, 7, 20, 39};
  const auto a = reader.fetch(1, idx);
  const auto b = memory.fetch(1, idx);
  CHECK(a.records == b.records);
  CHECK(a.bytes_read == b.bytes_read);
  CHECK(memory.calls() == 1);
}

TEST_CASE("reader rejects zero workers and missing files") {
  TempDir dir("fr");
  pack_store(dir / "s.fnsb", flashffn::testing::random_layers(1, 4, 8, 1), {4, 64});
  CHECK_THROWS_AS(FlashReader(dir / "s.fnsb", {0, 0, BypassMode::kOff}), Error);
  try {
    FlashReader missing(dir / "none.fnsb");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("bypass mode parsing") {
  CHECK(parse_bypass_mode("require") == BypassMode::kRequire);
  CHECK(parse_bypass_mode("try") == BypassMode::kTry);
  CHECK(parse_bypass_mode("off") == BypassMode::kOff);
  CHECK(to_string(BypassMode::kTry) == "try");
  CHECK_THROWS_AS(parse_bypass_mode("sometimes"), Error);
}

TEST_CASE("probe records positive throughput for every cell") {
  TempDir dir("fr");
  write_probe_file(dir / "p.bin", 4 << 20, 2);
  ProbeOptions o;
  o.chunk_sizes = {4096, 32768};
  o.thread_counts = {1, 2};
  o.seconds_per_cell = 0.01;
  o.bypass = BypassMode::kOff;
  const auto grid = probe_throughput(dir / "p.bin", o);
  CHECK(grid.gib_per_s.size() == 4);
  CHECK_NOTHROW(grid.validate());
  for (double v : grid.gib_per_s) CHECK(v > 0.0);
}

TEST_CASE("chunk larger than the file is an error") {
  TempDir dir("fr");
  write_probe_file(dir / "p.bin", 64 << 10, 2);
  ProbeOptions o;
  o.chunk_sizes = {1 << 20};
  o.thread_counts = {1};
  o.seconds_per_cell = 0.01;
  CHECK_THROWS_WITH_AS(probe_throughput(dir / "p.bin", o), doctest::Contains("file too small"), Error);
}

TEST_CASE("repeated cell stays inside a variance band") {
  TempDir dir("fr");
  write_probe_file(dir / "p.bin", 8 << 20, 5);
  ProbeOptions o;
  o.chunk_sizes = {65536};
  o.thread_counts = {2};
  o.seconds_per_cell = 0.02;
  o.bypass = BypassMode::kOff;
  const double first = probe_throughput(dir / "p.bin", o).at(0, 0);
  const double second = probe_throughput(dir / "p.bin", o).at(0, 0);
  const double ratio = std::max(first, second) / std::min(first, second);
  MESSAGE("repeat probe: " << first << " vs " << second << " GiB/s, ratio " << ratio);
  CHECK(ratio < 10.0);
}

TEST_CASE("throughput grid CSV round trip and validation") {
  ThroughputGrid g;
  g.chunk_sizes = {4096, 65536};
  g.thread_counts = {1, 4, 8};
  g.gib_per_s = {0.1, 0.3, 0.5, 1.1, 2.9, 3.3};
  const auto back = ThroughputGrid::from_csv(g.to_csv());
  CHECK(back.chunk_sizes == g.chunk_sizes);
  CHECK(back.thread_counts == g.thread_counts);
  for (std::size_t i = 0; i < g.gib_per_s.size(); ++i) CHECK(back.gib_per_s[i] == doctest::Approx(g.gib_per_s[i]));
  CHECK_THROWS_AS(ThroughputGrid::from_csv("chunk_bytes,threads,gib_per_s\n4096,1,0.5\n4096,1,0.5\n"), Error);
  CHECK_THROWS_AS(ThroughputGrid::from_csv("chunk_bytes,threads,gib_per_s\n4096,1,0.5\n8192,2,0.5\n"), Error);
  CHECK_THROWS_AS(ThroughputGrid::from_csv("a,b\n"), Error);
  g.gib_per_s[2] = 0.0;
  CHECK_THROWS_AS(g.validate(), Error);
  g.gib_per_s.pop_back();
  CHECK_THROWS_AS(g.validate(), Error);
}

}  // TEST_SUITE
