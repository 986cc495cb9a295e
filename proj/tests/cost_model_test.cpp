// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "flashffn/cost_model.hpp"
#include "flashffn/synthetic.hpp"
#include "test_util.hpp"

using namespace flashffn;

namespace {

// Mean union size over every run of k consecutive sets, via std::set.
double brute_force_usage(const std::vector<IndexSet>& sets, std::size_t k) {
  if (k == 0) return 0.0;
  double total = 0.0;
  for (std::size_t end = k; end <= sets.size(); ++end) {
    std::set<NeuronIndex> u;
    for (std::size_t t = end - k; t < end; ++t) u.insert(sets[t].begin(), sets[t].end());
    total += static_cast<double>(u.size());
  }
  return total / static_cast<double>(sets.size() - k + 1);
}

ActivationTrace single_layer(std::vector<IndexSet> sets, std::uint32_t d_ffn) {
  ActivationTrace t;
  t.n_layers = 1;
  t.d_ffn = d_ffn;
  for (auto& s : sets) t.append({std::move(s)});
  return t;
}

const ThroughputModel kDevice{120e-6, 1.5 * kGiB, 6.0 * kGiB, 8};

}  // namespace

TEST_SUITE("cost_model") {

TEST_CASE("reference latencies") {
  CHECK(io_latency_ms({"naive", 13.4 * kGB, 6.10 * kGB}) == doctest::Approx(2196.7).epsilon(1e-4));
  CHECK(io_latency_ms({"+bundling", 0.2 * kGB, 2.25 * kGB}) == doctest::Approx(88.9).epsilon(1e-3));
  CHECK(io_latency_ms({"none", 0.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(io_latency_ms({"bad", 1.0, 0.0}), Error);
  CHECK_THROWS_AS(io_latency_ms({"bad", -1.0, 1.0}), Error);
}

TEST_CASE("reference table matches the reported figures and ordering") {
  const auto rows = reference_scenarios();
  REQUIRE(rows.size() == 5);
  const char* labels[] = {"naive", "hybrid", "predictor", "+windowing", "+bundling"};
  const double reported[] = {2196, 1090, 738, 164, 87};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rows[i].io.label == labels[i]);
    CHECK(rows[i].reported_ms == reported[i]);
    // Inputs are quoted to one decimal, so allow 3% against the published latency.
    CHECK(std::fabs(rows[i].io_ms - reported[i]) / reported[i] < 0.03);
    if (i > 0) CHECK(rows[i].io_ms < rows[i - 1].io_ms);
  }
}

TEST_CASE("scenario CSV columns") {
  const auto csv = scenario_table_csv(reference_scenarios());
  CHECK(csv.rfind("label,dram_gb,flash_to_dram_gb,throughput_gb_s,io_latency_ms,reported_ms\n", 0) == 0);
  CHECK(csv.find("naive,0,13.4,6.1,2196.72,2196") != std::string::npos);
  std::vector<ScenarioRow> rows(1);
  rows[0].io = {"x", kGB, kGB};
  CHECK(scenario_table_csv(rows).rfind("label,dram_gb,flash_to_dram_gb,throughput_gb_s,io_latency_ms\n", 0) == 0);
}

TEST_CASE("throughput model shape") {
  CHECK(kDevice.predict(4096, 1) < kDevice.predict(32768, 1));
  CHECK(kDevice.predict(32768, 1) < kDevice.predict(32768, 4));
  CHECK(kDevice.predict(32768, 8) == kDevice.predict(32768, 32));
  CHECK(kDevice.predict(1 << 26, 32) == 6.0 * kGiB);
  const double c = 16384;
  const double expected = (2 * c / (120e-6 + 2 * c / (1.5 * kGiB))) / (c / (120e-6 + c / (1.5 * kGiB)));
  CHECK(chunk_doubling_gain(kDevice, c, 1) == doctest::Approx(expected));
  CHECK(chunk_doubling_gain(kDevice, c, 1) > 1.0);
}

TEST_CASE("fit recovers a known model from a noiseless grid") {
  const std::vector<std::uint64_t> chunks{4096, 16384, 32768, 65536, 262144, 1048576};
  const std::vector<unsigned> threads{1, 2, 4, 8, 16, 32};
  for (const ThroughputModel truth : {kDevice, ThroughputModel{60e-6, 2.5 * kGiB, 8.0 * kGiB, 4},
                                      ThroughputModel{200e-6, 1.0 * kGiB, 3.0 * kGiB, 16}}) {
    const auto fit = fit_throughput_model(synthesize_grid(truth, chunks, threads, 0.0, 1));
    CHECK(fit.model.t0_seconds == doctest::Approx(truth.t0_seconds).epsilon(0.05));
    CHECK(fit.model.stream_bytes_per_s == doctest::Approx(truth.stream_bytes_per_s).epsilon(0.05));
    CHECK(fit.model.max_bytes_per_s == doctest::Approx(truth.max_bytes_per_s).epsilon(0.05));
    CHECK(fit.model.saturation_threads == truth.saturation_threads);
    CHECK(fit.rms_log_residual < 1e-6);
    CHECK(fit.log_residuals.size() == chunks.size() * threads.size());
  }
}

TEST_CASE("fit stays within 5% under mild noise") {
  const std::vector<std::uint64_t> chunks{4096, 16384, 32768, 65536, 262144, 1048576};
  const std::vector<unsigned> threads{1, 2, 4, 8, 16, 32};
  const auto fit = fit_throughput_model(synthesize_grid(kDevice, chunks, threads, 0.01, 7));
  CHECK(fit.model.t0_seconds == doctest::Approx(kDevice.t0_seconds).epsilon(0.05));
  CHECK(fit.model.stream_bytes_per_s == doctest::Approx(kDevice.stream_bytes_per_s).epsilon(0.05));
  CHECK(fit.model.max_bytes_per_s == doctest::Approx(kDevice.max_bytes_per_s).epsilon(0.05));
}

TEST_CASE("constant grid fits a zero first-byte latency") {
  ThroughputGrid g;
  g.chunk_sizes = {4096, 32768, 262144};
  g.thread_counts = {1, 2, 4};
  g.gib_per_s.assign(9, 2.0);
  const auto fit = fit_throughput_model(g);
  CHECK(fit.model.t0_seconds < 1e-9);
  for (double r : fit.log_residuals) CHECK(std::fabs(r) < 1e-6);
}

TEST_CASE("degenerate grids are rejected") {
  ThroughputGrid g;
  g.chunk_sizes = {4096};
  g.thread_counts = {1, 2};
  g.gib_per_s = {1.0, 2.0};
  CHECK_THROWS_AS(fit_throughput_model(g), Error);
}

TEST_CASE("fit on a measured grid is monotone in chunk size") {
  flashffn::testing::TempDir dir("cm");
  write_probe_file(dir / "p.bin", 8 << 20, 3);
  ProbeOptions o;
  o.chunk_sizes = {4096, 16384, 65536};
  o.thread_counts = {1, 2};
  o.seconds_per_cell = 0.01;
  o.bypass = BypassMode::kOff;
  const auto fit = fit_throughput_model(probe_throughput(dir / "p.bin", o));
  for (double p : {1.0, 2.0, 8.0}) {
    double prev = 0.0;
    for (double c = 512; c <= (1 << 22); c *= 2) {
      const double v = fit.model.predict(c, p);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("s_agg of a repeated set is constant") {
  std::vector<IndexSet> sets(10, IndexSet{1, 4, 9});
  const auto s = aggregated_usage(sets, 6);
  CHECK(s[0] == 0.0);
  for (std::size_t k = 1; k <= 6; ++k) CHECK(s[k] == 3.0);
  const auto inc = usage_increments(s);
  CHECK(inc[0] == 3.0);
  for (std::size_t k = 1; k < inc.size(); ++k) CHECK(inc[k] == 0.0);
}

TEST_CASE("s_agg of disjoint sets grows linearly") {
  std::vector<IndexSet> sets;
  for (NeuronIndex t = 0; t < 12; ++t) sets.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  const auto s = aggregated_usage(sets, 8);
  for (std::size_t k = 0; k <= 8; ++k) CHECK(s[k] == 3.0 * k);
}

TEST_CASE("s_agg on a correlated trace matches brute force and flattens") {
  synth::ZipfTraceOptions o;
  o.n_tokens = 200;
  o.seed = 4;
  const auto trace = synth::zipf_correlated_trace(o);
  const auto sets = trace.layer_sets(0);
  const auto s = aggregated_usage(sets, 16);
  double mean_size = 0.0;
  for (const auto& x : sets) mean_size += static_cast<double>(x.size());
  mean_size /= static_cast<double>(sets.size());
  for (std::size_t k = 0; k <= 16; ++k) CHECK(s[k] == doctest::Approx(brute_force_usage(sets, k)));
  const auto inc = usage_increments(s);
  for (std::size_t k = 0; k + 1 < s.size(); ++k) CHECK(s[k + 1] >= s[k]);
  for (std::size_t k = 0; k + 1 < inc.size(); ++k) CHECK(inc[k + 1] <= inc[k] + 1e-9);
  for (double d : inc) CHECK(d <= mean_size + 1e-9);
}

TEST_CASE("s_agg sums layers and rejects windows longer than the trace") {
  synth::ZipfTraceOptions o;
  o.n_tokens = 30;
  o.n_layers = 3;
  const auto trace = synth::zipf_correlated_trace(o);
  const auto total = aggregated_usage(trace, 5);
  std::vector<double> sum(6, 0.0);
  for (std::uint32_t l = 0; l < 3; ++l) {
    const auto s = aggregated_usage(trace.layer_sets(l), 5);
    for (std::size_t k = 0; k < 6; ++k) sum[k] += s[k];
  }
  for (std::size_t k = 0; k < 6; ++k) CHECK(total[k] == doctest::Approx(sum[k]));
  CHECK_THROWS_AS(aggregated_usage(trace, 31), Error);
  CHECK_THROWS_AS(aggregated_usage(std::vector<IndexSet>{}, 0), Error);
}

TEST_CASE("wider windows trade memory for latency") {
  synth::ZipfTraceOptions o;
  o.n_tokens = 120;
  o.n_layers = 2;
  const auto trace = synth::zipf_correlated_trace(o);
  ModelFootprint fp;
  fp.embeddings = 1e6;
  fp.ffn_total = 2.0 * o.topic.d_ffn * 4096;
  const auto rows = tradeoff_sweep(trace, kDevice, 8, 4096, fp, 32);
  REQUIRE(rows.size() == 9);
  CHECK(rows[4].io_ms <= rows[0].io_ms);
  CHECK(rows[4].dram_fraction >= rows[0].dram_fraction);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(rows[k].dram_fraction >= rows[k - 1].dram_fraction);
    CHECK(rows[k].dram_fraction <= 1.0);
  }
  CHECK(tradeoff_csv(rows).rfind("k,dram_fraction,io_ms,loaded_neurons\n", 0) == 0);
}

TEST_CASE("single-token trace sweeps one row") {
  const auto trace = single_layer({IndexSet{1, 2, 3}}, 8);
  ModelFootprint fp;
  fp.ffn_total = 8 * 100;
  const auto rows = tradeoff_sweep(trace, kDevice, 8, 100, fp, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].k == 0);
  CHECK(rows[0].loaded_neurons == 3.0);
}

TEST_CASE("loading every neuron with no window reproduces the naive row") {
  std::vector<IndexSet> sets(3);
  for (auto& s : sets)
    for (NeuronIndex i = 0; i < 100; ++i) s.push_back(i);
  const auto trace = single_layer(sets, 100);
  const ThroughputModel flat{0.0, 6.1 * kGB, 6.1 * kGB, 1};
  ModelFootprint fp;
  fp.ffn_total = 13.4 * kGB;
  const auto rows = tradeoff_sweep(trace, flat, 0, 134000000, fp, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].io_ms == doctest::Approx(reference_scenarios()[0].io_ms));
  CHECK(rows[0].dram_fraction == doctest::Approx(1.0));
}

TEST_CASE("toy scenarios use row and bundle read sizes") {
  ToyScenarioInputs in;
  in.d_model = 64;
  in.d_ffn = 256;
  in.n_layers = 4;
  in.footprint = {1e5, 2e5, 3e4, 4.0 * 256 * (129 * 4)};
  in.predicted_per_token = 80;
  in.window_union = 200;
  in.window_increment = 20;
  in.throughput = kDevice;
  const auto rows = toy_scenarios(in);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].io.bytes_per_token == doctest::Approx(in.footprint.total()));
  CHECK(rows[1].io.bytes_per_token == doctest::Approx(in.footprint.total() / 2));
  CHECK(rows[2].io.bytes_per_token == doctest::Approx(80 * 129 * 4));
  CHECK(rows[3].io.bytes_per_token == doctest::Approx(20 * 129 * 4));
  CHECK(rows[4].io.bytes_per_second == doctest::Approx(kDevice.predict(2 * 256, 32)));
  CHECK(rows[3].io.bytes_per_second == doctest::Approx(kDevice.predict(256, 32)));
  CHECK(rows[4].io_ms < rows[3].io_ms);
  CHECK(rows[3].io_ms < rows[2].io_ms);
}

}  // TEST_SUITE
