// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic I/O latency model: per-token transfer arithmetic, a fitted
// chunk-size/thread throughput curve, windowed neuron usage and the
// window-size versus DRAM tradeoff.
//
// Units are explicit: kGB is decimal, kGiB binary. Scenario tables quote
// decimal GB and GB/s.

#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flashffn/common.hpp"
#include "flashffn/flash_reader.hpp"
#include "flashffn/trace.hpp"

namespace flashffn {

inline constexpr double kGB = 1e9;
inline constexpr double kGiB = 1073741824.0;

struct IoScenario {
  std::string label;
  double bytes_per_token = 0.0;
  double bytes_per_second = 0.0;
};

/// bytes / throughput in milliseconds. Zero bytes costs zero.
double io_latency_ms(const IoScenario& scenario);

struct ScenarioRow {
  IoScenario io;
  double dram_bytes = 0.0;
  double io_ms = 0.0;
  double reported_ms = 0.0;  // 0 when there is no reference figure
};

/// OPT 6.7B at 16 bits with half the model's memory available: the five
/// configurations from naive streaming to bundled windowed loading, with the
/// measured throughputs and latencies they were reported with.
std::vector<ScenarioRow> reference_scenarios();

/// label,dram_gb,flash_to_dram_gb,throughput_gb_s,io_latency_ms[,reported_ms]
std::string scenario_table_csv(std::span<const ScenarioRow> rows);

/// Random-read throughput as a function of chunk size c (bytes) and thread
/// count p:  min(p, p_sat) * c / (t0 + c / B), capped at B_max.
struct ThroughputModel {
  double t0_seconds = 0.0;
  double stream_bytes_per_s = 0.0;
  double max_bytes_per_s = std::numeric_limits<double>::infinity();
  std::uint32_t saturation_threads = 1;

  double predict(double chunk_bytes, double threads) const;
};

struct ThroughputFit {
  ThroughputModel model;
  std::vector<double> log_residuals;  // ln(measured / predicted), grid order
  double rms_log_residual = 0.0;
};

/// Exhaustive over p_sat and the cap, weighted linear least squares for
/// (t0, 1/B) on the uncapped cells.
ThroughputFit fit_throughput_model(const ThroughputGrid& grid);

/// Grid of model predictions with multiplicative lognormal noise.
ThroughputGrid synthesize_grid(const ThroughputModel& model, std::span<const std::uint64_t> chunk_sizes,
                               std::span<const unsigned> thread_counts, double noise, std::uint64_t seed);

/// Throughput gain from doubling the read unit, e.g. 16 KiB rows to 32 KiB bundles.
double chunk_doubling_gain(const ThroughputModel& model, double chunk_bytes, double threads);

/// s[k] = mean over windows of k consecutive tokens of the union size, for
/// k = 0..k_max (s[0] = 0). Only windows lying fully inside the sequence count.
std::vector<double> aggregated_usage(std::span<const IndexSet> sets, std::uint32_t k_max);
/// Sum of the per-layer curves.
std::vector<double> aggregated_usage(const ActivationTrace& trace, std::uint32_t k_max);
/// inc[k] = s[k+1] - s[k]: neurons loaded per token when k past tokens stay cached.
std::vector<double> usage_increments(std::span<const double> s_agg);

/// DRAM components outside the FFN window, in bytes.
struct ModelFootprint {
  double embeddings = 0.0;
  double attention = 0.0;
  double predictors = 0.0;
  double ffn_total = 0.0;  // all FFN records of all layers

  double resident() const { return embeddings + attention + predictors; }
  double total() const { return resident() + ffn_total; }
};

struct TradeoffRow {
  std::uint32_t k = 0;           // past tokens kept
  double dram_fraction = 0.0;
  double io_ms = 0.0;
  double loaded_neurons = 0.0;   // per token
};

/// k past tokens cached: DRAM holds s(k+1) records, each token loads
/// s(k+1) - s(k) records through the throughput model at the record size.
std::vector<TradeoffRow> tradeoff_sweep(const ActivationTrace& trace, const ThroughputModel& model,
                                        std::uint32_t k_max, std::uint64_t record_bytes,
                                        const ModelFootprint& footprint, unsigned threads);
/// k,dram_fraction,io_ms,loaded_neurons
std::string tradeoff_csv(std::span<const TradeoffRow> rows);

struct ToyScenarioInputs {
  std::uint32_t d_model = 0;
  std::uint32_t d_ffn = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t scalar_width = 4;
  ModelFootprint footprint;
  double predicted_per_token = 0.0;  // summed over layers
  double window_union = 0.0;         // s(k+1) summed over layers
  double window_increment = 0.0;     // s(k+1) - s(k) summed over layers
  ThroughputModel throughput;
  unsigned threads = 32;
  double sequential_chunk = 1 << 20;
};

/// The same five configurations for a toy model: naive, hybrid, predictor,
/// +windowing, +bundling.
std::vector<ScenarioRow> toy_scenarios(const ToyScenarioInputs& in);

}  // namespace flashffn
