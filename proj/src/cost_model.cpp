// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace flashffn {

double io_latency_ms(const IoScenario& s) {
  if (s.bytes_per_token < 0.0) fail(ErrorKind::kUsage, "negative transfer size");
  if (s.bytes_per_token == 0.0) return 0.0;
  if (!(s.bytes_per_second > 0.0)) fail(ErrorKind::kUsage, "throughput must be positive");
  return s.bytes_per_token / s.bytes_per_second * 1e3;
}

std::vector<ScenarioRow> reference_scenarios() {
  struct Raw {
    const char* label;
    double dram_gb, transfer_gb, gb_per_s, reported_ms;
  };
  static constexpr Raw raw[] = {
      {"naive", 0.0, 13.4, 6.10, 2196},        {"hybrid", 6.7, 6.7, 6.10, 1090},
      {"predictor", 4.8, 0.9, 1.25, 738},      {"+windowing", 6.5, 0.2, 1.25, 164},
      {"+bundling", 6.5, 0.2, 2.25, 87},
  };
  std::vector<ScenarioRow> rows;
  for (const auto& r : raw) {
    ScenarioRow row;
    row.io = {r.label, r.transfer_gb * kGB, r.gb_per_s * kGB};
    row.dram_bytes = r.dram_gb * kGB;
    row.io_ms = io_latency_ms(row.io);
    row.reported_ms = r.reported_ms;
    rows.push_back(row);
  }
  return rows;
}

std::string scenario_table_csv(std::span<const ScenarioRow> rows) {
  const bool reported = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.reported_ms > 0.0; });
  std::ostringstream out;
  out.precision(6);
  out << "label,dram_gb,flash_to_dram_gb,throughput_gb_s,io_latency_ms" << (reported ? ",reported_ms" : "") << '\n';
  for (const auto& r : rows) {
    out << r.io.label << ',' << r.dram_bytes / kGB << ',' << r.io.bytes_per_token / kGB << ','
        << r.io.bytes_per_second / kGB << ',' << r.io_ms;
    if (reported) out << ',' << r.reported_ms;
    out << '\n';
  }
  return out.str();
}

double ThroughputModel::predict(double chunk_bytes, double threads) const {
  const double q = std::min(threads, static_cast<double>(saturation_threads));
  const double raw = q * chunk_bytes / (t0_seconds + chunk_bytes / stream_bytes_per_s);
  return std::min(raw, max_bytes_per_s);
}

namespace {

struct Cell {
  double c, p, y;
};

// Weighted least squares of z = t0 + beta * c with weights 1/z^2, t0 >= 0.
bool fit_line(const std::vector<Cell>& cells, std::uint32_t p_sat, double& t0, double& beta) {
  double sw = 0, swc = 0, swcc = 0, swz = 0, swcz = 0;
  std::vector<double> cs;
  for (const auto& cell : cells) {
    const double q = std::min(cell.p, static_cast<double>(p_sat));
    const double z = q * cell.c / cell.y;
    const double w = 1.0 / (z * z);
    sw += w;
    swc += w * cell.c;
    swcc += w * cell.c * cell.c;
    swz += w * z;
    swcz += w * cell.c * z;
    cs.push_back(cell.c);
  }
  std::sort(cs.begin(), cs.end());
  const bool distinct = cs.size() >= 2 && cs.front() != cs.back();
  const double det = sw * swcc - swc * swc;
  if (distinct && det > 0.0) {
    t0 = (swcc * swz - swc * swcz) / det;
    beta = (sw * swcz - swc * swz) / det;
  } else {
    t0 = -1.0;
  }
  if (t0 < 0.0) {
    t0 = 0.0;
    beta = swcz / swcc;
  }
  return beta > 0.0 && std::isfinite(beta);
}

}  // namespace

ThroughputFit fit_throughput_model(const ThroughputGrid& grid) {
  grid.validate();
  if (grid.chunk_sizes.size() < 2 || grid.thread_counts.size() < 2) {
    fail(ErrorKind::kData, "degenerate grid: need at least 2 chunk sizes and 2 thread counts");
  }
  std::vector<Cell> cells;
  for (std::size_t ci = 0; ci < grid.chunk_sizes.size(); ++ci) {
    for (std::size_t ti = 0; ti < grid.thread_counts.size(); ++ti) {
      cells.push_back({static_cast<double>(grid.chunk_sizes[ci]), static_cast<double>(grid.thread_counts[ti]),
                       grid.at(ci, ti) * kGiB});
    }
  }
  std::vector<double> caps{std::numeric_limits<double>::infinity()};
  for (const auto& cell : cells) caps.push_back(cell.y);
  std::sort(caps.begin(), caps.end());
  caps.erase(std::unique(caps.begin(), caps.end()), caps.end());
  const auto max_threads = *std::max_element(grid.thread_counts.begin(), grid.thread_counts.end());

  ThroughputFit best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::uint32_t p_sat = 1; p_sat <= max_threads; ++p_sat) {
    for (double cap : caps) {
      std::vector<Cell> free;
      for (const auto& cell : cells)
        if (cell.y < cap) free.push_back(cell);
      if (free.size() < 2) continue;
      double t0 = 0, beta = 0;
      if (!fit_line(free, p_sat, t0, beta)) continue;
      ThroughputModel m{t0, 1.0 / beta, cap, p_sat};
      double sse = 0.0;
      for (const auto& cell : cells) {
        const double r = std::log(cell.y / m.predict(cell.c, cell.p));
        sse += r * r;
      }
      if (sse < best_sse * (1.0 - 1e-9)) {
        best_sse = sse;
        best.model = m;
      }
    }
  }
  if (!std::isfinite(best_sse)) fail(ErrorKind::kData, "degenerate grid: no consistent fit");
  for (const auto& cell : cells) best.log_residuals.push_back(std::log(cell.y / best.model.predict(cell.c, cell.p)));
  best.rms_log_residual = std::sqrt(best_sse / static_cast<double>(cells.size()));
  return best;
}

ThroughputGrid synthesize_grid(const ThroughputModel& model, std::span<const std::uint64_t> chunk_sizes,
                               std::span<const unsigned> thread_counts, double noise, std::uint64_t seed) {
  ThroughputGrid g;
  g.chunk_sizes.assign(chunk_sizes.begin(), chunk_sizes.end());
  g.thread_counts.assign(thread_counts.begin(), thread_counts.end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  for (auto c : chunk_sizes) {
    for (auto p : thread_counts) {
      const double v = model.predict(static_cast<double>(c), p) / kGiB;
      g.gib_per_s.push_back(noise > 0.0 ? v * std::exp(normal(rng)) : v);
    }
  }
  return g;
}

double chunk_doubling_gain(const ThroughputModel& model, double chunk_bytes, double threads) {
  return model.predict(2.0 * chunk_bytes, threads) / model.predict(chunk_bytes, threads);
}

std::vector<double> aggregated_usage(std::span<const IndexSet> sets, std::uint32_t k_max) {
  if (sets.empty()) fail(ErrorKind::kData, "empty trace");
  if (k_max > sets.size()) {
    fail(ErrorKind::kUsage, "k_max " + std::to_string(k_max) + " exceeds trace length " + std::to_string(sets.size()));
  }
  NeuronIndex top = 0;
  for (const auto& s : sets)
    if (!s.empty()) top = std::max(top, s.back());
  std::vector<std::uint32_t> stamp(static_cast<std::size_t>(top) + 1, 0);
  std::vector<double> total(k_max + 1, 0.0);
  std::uint32_t epoch = 0;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    ++epoch;
    std::size_t size = 0;
    for (std::uint32_t k = 1; k <= k_max && k <= t + 1; ++k) {
      for (auto n : sets[t + 1 - k]) {
        if (stamp[n] != epoch) {
          stamp[n] = epoch;
          ++size;
        }
      }
      total[k] += static_cast<double>(size);
    }
  }
  std::vector<double> s(k_max + 1, 0.0);
  for (std::uint32_t k = 1; k <= k_max; ++k) s[k] = total[k] / static_cast<double>(sets.size() - k + 1);
  return s;
}

std::vector<double> aggregated_usage(const ActivationTrace& trace, std::uint32_t k_max) {
  if (trace.size() == 0) fail(ErrorKind::kData, "empty trace");
  std::vector<double> sum(k_max + 1, 0.0);
  for (std::uint32_t l = 0; l < trace.n_layers; ++l) {
    const auto s = aggregated_usage(trace.layer_sets(l), k_max);
    for (std::size_t k = 0; k < s.size(); ++k) sum[k] += s[k];
  }
  return sum;
}

std::vector<double> usage_increments(std::span<const double> s_agg) {
  std::vector<double> inc;
  for (std::size_t k = 0; k + 1 < s_agg.size(); ++k) inc.push_back(s_agg[k + 1] - s_agg[k]);
  return inc;
}

std::vector<TradeoffRow> tradeoff_sweep(const ActivationTrace& trace, const ThroughputModel& model,
                                        std::uint32_t k_max, std::uint64_t record_bytes,
                                        const ModelFootprint& footprint, unsigned threads) {
  const auto k_top = static_cast<std::uint32_t>(std::min<std::size_t>(k_max, trace.size() - 1));
  const auto s = aggregated_usage(trace, k_top + 1);
  const double throughput = model.predict(static_cast<double>(record_bytes), threads);
  std::vector<TradeoffRow> rows;
  for (std::uint32_t k = 0; k <= k_top; ++k) {
    TradeoffRow r;
    r.k = k;
    r.loaded_neurons = s[k + 1] - s[k];
    r.dram_fraction = (footprint.resident() + s[k + 1] * static_cast<double>(record_bytes)) / footprint.total();
    r.io_ms = io_latency_ms({"window", r.loaded_neurons * static_cast<double>(record_bytes), throughput});
    rows.push_back(r);
  }
  return rows;
}

std::string tradeoff_csv(std::span<const TradeoffRow> rows) {
  std::ostringstream out;
  out.precision(8);
  out << "k,dram_fraction,io_ms,loaded_neurons\n";
  for (const auto& r : rows) out << r.k << ',' << r.dram_fraction << ',' << r.io_ms << ',' << r.loaded_neurons << '\n';
  return out.str();
}

std::vector<ScenarioRow> toy_scenarios(const ToyScenarioInputs& in) {
  const double w = in.scalar_width;
  const double row_bytes = static_cast<double>(in.d_model) * w;
  const double neuron_bytes = 2.0 * row_bytes + w;
  const double model_bytes = in.footprint.total();
  const double seq = in.throughput.predict(in.sequential_chunk, in.threads);
  const double rows_tp = in.throughput.predict(row_bytes, in.threads);
  const double bundle_tp = in.throughput.predict(2.0 * row_bytes, in.threads);
  const double resident = in.footprint.resident();

  auto row = [](std::string label, double dram, double bytes, double tp) {
    ScenarioRow r;
    r.io = {std::move(label), bytes, tp};
    r.dram_bytes = dram;
    r.io_ms = io_latency_ms(r.io);
    return r;
  };
  return {
      row("naive", 0.0, model_bytes, seq),
      row("hybrid", model_bytes / 2.0, model_bytes / 2.0, seq),
      row("predictor", resident, in.predicted_per_token * neuron_bytes, rows_tp),
      row("+windowing", resident + in.window_union * neuron_bytes, in.window_increment * neuron_bytes, rows_tp),
      row("+bundling", resident + in.window_union * neuron_bytes, in.window_increment * neuron_bytes, bundle_tp),
  };
}

}  // namespace flashffn
