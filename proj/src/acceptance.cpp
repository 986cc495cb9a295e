// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "flashffn/analysis.hpp"
#include "flashffn/speculative.hpp"
#include "flashffn/synthetic.hpp"

namespace flashffn {
namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool condition, const std::string& what) {
    if (!condition && passed) {
      passed = false;
      detail << "FAILED: " << what << "; ";
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

LayerWeights random_layer(std::size_t d_model, std::size_t d_ffn, std::mt19937_64& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  LayerWeights w(d_model, d_ffn);
  for (auto* v : {&w.up, &w.down, &w.bias})
    for (auto& s : *v) s = normal(rng);
  return w;
}

IndexSet random_subset(std::uint32_t d_ffn, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution pick(p);
  IndexSet s;
  for (NeuronIndex i = 0; i < d_ffn; ++i)
    if (pick(rng)) s.push_back(i);
  return s;
}

void write_artifact(const AcceptanceOptions& o, const std::string& name, const std::string& text) {
  if (o.report_dir.empty()) return;
  std::filesystem::create_directories(o.report_dir);
  std::ofstream out(o.report_dir / name);
  if (!out) fail(ErrorKind::kIo, "cannot write report " + (o.report_dir / name).string());
  out << text;
}

// 1
void table_reproduction(const AcceptanceOptions& o, Outcome& out) {
  const double expected[] = {2196.72, 1098.36, 720.0, 160.0, 88.89};
  const auto rows = reference_scenarios();
  out.require(rows.size() == 5, "five reference rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double rel = std::abs(r.io_ms - r.reported_ms) / r.reported_ms;
    out.detail << r.io.label << " " << fmt(r.io_ms, 5) << "ms vs " << r.reported_ms << "ms (" << fmt(rel * 100, 2)
               << "%); ";
    out.require(std::abs(r.io_ms - expected[i]) < 0.01, r.io.label + " arithmetic");
    out.require(rel <= 0.03, r.io.label + " within 3% of the reported latency");
  }
  write_artifact(o, "reference_scenarios.csv", scenario_table_csv(rows));
}

// 2
void scenario_ordering(const AcceptanceOptions&, Outcome& out) {
  const auto rows = reference_scenarios();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    out.require(rows[i].io_ms < rows[i - 1].io_ms, rows[i].io.label + " faster than " + rows[i - 1].io.label);
  }
  for (const auto& r : rows) out.detail << fmt(r.io_ms, 5) << ' ';
}

// 3
void gated_equivalence(const AcceptanceOptions& o, Outcome& out) {
  ToyModelConfig cfg;
  cfg.d_model = 64;
  cfg.d_ffn = 256;
  cfg.n_layers = 4;
  cfg.seed = o.seed;
  ToyModel model(cfg);
  const auto& layers = model.ffn_layers();
  InMemoryRecordSource source(layers, 4096);
  std::vector<NeuronCache> masked, superset;
  for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
    masked.emplace_back(CacheConfig{l, cfg.d_model, cfg.d_ffn, cfg.d_ffn, 2, OverflowPolicy::kError});
    superset.emplace_back(CacheConfig{l, cfg.d_model, cfg.d_ffn, cfg.d_ffn, 1, OverflowPolicy::kError});
  }
  std::mt19937_64 rng(o.seed + 3);
  std::uniform_real_distribution<double> density(0.02, 0.4);
  auto state = model.initial_state();
  double max_masked = 0.0, max_dense = 0.0;
  std::size_t checks = 0;
  for (int t = 0; t < 100; ++t) {
    auto h = model.embed(static_cast<std::uint32_t>(rng() % cfg.vocab));
    for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
      const auto x = model.attention(l, h, state);
      const auto& w = layers[l];

      masked[l].update_window(random_subset(cfg.d_ffn, density(rng), rng), source);
      const auto sparse = sparse_ffn_forward(x, masked[l].resident_views());
      const auto oracle = masked_dense_forward(x, w, masked[l].resident_set());
      for (std::size_t i = 0; i < sparse.size(); ++i) max_masked = std::max(max_masked, double(std::abs(sparse[i] - oracle[i])));

      const auto cover = set_union(true_active_set(x, w), random_subset(cfg.d_ffn, 0.05, rng));
      superset[l].update_window(cover, source);
      const auto sparse_all = sparse_ffn_forward(x, superset[l].resident_views());
      const auto dense = dense_oracle_forward(x, w);
      for (std::size_t i = 0; i < dense.size(); ++i) max_dense = std::max(max_dense, double(std::abs(sparse_all[i] - dense[i])));

      model.residual(h, x, dense);
      checks += 2;
    }
  }
  out.detail << checks << " layer evaluations; max |masked delta| " << fmt(max_masked, 3) << ", max |dense delta| "
             << fmt(max_dense, 3) << "; ";
  out.require(max_masked <= 1e-5, "sparse output equals the masked dense oracle");
  out.require(max_dense <= 1e-5, "sparse output over a superset of true activations equals the dense oracle");
}

// 4
void cache_invariants(const AcceptanceOptions& o, Outcome& out) {
  const std::uint32_t d_model = 8, d_ffn = 512;
  std::mt19937_64 rng(o.seed + 4);
  const auto weights = random_layer(d_model, d_ffn, rng);
  InMemoryRecordSource source(std::span<const LayerWeights>(&weights, 1), 4096);
  synth::ZipfTraceOptions zo;
  zo.n_tokens = 500;
  zo.topic.d_ffn = d_ffn;
  zo.seed = o.seed + 40;
  const auto sets = synth::zipf_correlated_trace(zo).layer_sets(0);
  for (std::uint32_t k : {1u, 2u, 4u, 8u}) {
    const auto cap = calibrate_capacity(sets, k, 0.1, d_ffn);
    NeuronCache cache(CacheConfig{0, d_model, d_ffn, cap, k, OverflowPolicy::kError});
    const float* address = cache.buffer_address();
    const std::size_t extent = cache.buffer_extent();
    std::size_t bad_union = 0, bad_moves = 0, bad_rows = 0, moved = 0;
    for (std::size_t t = 0; t < sets.size(); ++t) {
      const auto stats = cache.update_window(sets[t], source);
      IndexSet expect;
      for (std::size_t j = t + 1 >= k ? t + 1 - k : 0; j <= t; ++j) expect = set_union(expect, sets[j]);
      if (cache.resident_set() != expect) ++bad_union;
      if (stats.element_moves > stats.deleted * 2ull * d_model) ++bad_moves;
      moved += stats.element_moves;
      const auto v = cache.resident_views();
      for (std::size_t r = 0; r < v.num_used(); ++r) {
        const auto up = weights.up_row(v.pointer[r]);
        const auto down = weights.down_row(v.pointer[r]);
        if (!std::equal(up.begin(), up.end(), v.up.row(r).begin()) ||
            !std::equal(down.begin(), down.end(), v.down.column(r).begin()) || v.bias[r] != weights.bias[v.pointer[r]]) {
          ++bad_rows;
        }
      }
      if (cache.buffer_address() != address || cache.buffer_extent() != extent) {
        out.require(false, "buffer reallocated at k=" + std::to_string(k));
      }
    }
    out.detail << "k=" << k << " cap=" << cap << " moves=" << moved << "; ";
    out.require(bad_union == 0, "resident set equals the windowed union at k=" + std::to_string(k));
    out.require(bad_moves == 0, "move bound at k=" + std::to_string(k));
    out.require(bad_rows == 0, "resident rows hold their neuron's weights at k=" + std::to_string(k));
  }
}

// 5
void bundling_arithmetic(const AcceptanceOptions&, Outcome& out) {
  const auto big = make_manifest(4096, 16, 1, {4, kDefaultRecordAlignment});
  const std::uint64_t unit = 2ull * 4096 * 4;
  out.require(big.payload_bytes() == unit + 4, "payload = 2 d_model scalars + bias");
  out.require(unit >= 32 * 1024, "bundled unit is at least 32 KiB");
  out.require(big.record_stride >= big.payload_bytes() && big.record_stride % big.record_alignment == 0,
              "stride covers the payload and is aligned");
  out.require(unit >= 2 * 4096ull * 4, "bundle doubles a bare row");
  const auto toy = make_manifest(64, 256, 4, {4, 64});
  out.require(toy.payload_bytes() == (2 * 64 + 1) * 4, "toy payload");
  const auto half = make_manifest(4096, 16, 1, {2, kDefaultRecordAlignment});
  out.require(half.payload_bytes() == (2 * 4096 + 1) * 2, "16-bit payload");
  out.detail << "d_model=4096 f32 unit " << unit << " B, record " << big.payload_bytes() << " B, stride "
             << big.record_stride << " B; ";
}

// 6
void read_plan_oracle(const AcceptanceOptions& o, Outcome& out) {
  const std::uint32_t d_ffn = 16384;
  const auto manifest = make_manifest(8, d_ffn, 1, {4, 64});
  std::mt19937_64 rng(o.seed + 6);
  std::uniform_int_distribution<std::uint32_t> size(1, 1000), idx(0, d_ffn - 1);
  std::vector<std::uint8_t> wanted(d_ffn);
  std::size_t mismatches = 0;
  for (int s = 0; s < 1000; ++s) {
    std::vector<NeuronIndex> v(size(rng));
    for (auto& i : v) i = idx(rng);
    const auto set = make_index_set(std::move(v));
    std::fill(wanted.begin(), wanted.end(), 0);
    for (auto i : set) wanted[i] = 1;
    for (std::uint32_t gap : {0u, 1u, 2u}) {
      // Interval merge over a bitmap: a run grows while the next wanted
      // record lies within gap + 1 of the last one.
      std::uint64_t runs = 0, bytes = 0;
      for (std::uint32_t i = 0; i < d_ffn;) {
        if (!wanted[i]) {
          ++i;
          continue;
        }
        std::uint32_t last = i;
        for (std::uint32_t j = i + 1; j < d_ffn && j <= last + gap + 1; ++j)
          if (wanted[j]) last = j;
        ++runs;
        bytes += (last - i + 1ull) * manifest.record_stride;
        i = last + 1;
      }
      const auto plan = plan_reads(set, manifest, 0, gap);
      if (plan.runs.size() != runs || plan.total_bytes != bytes || plan.neuron_count() != set.size()) ++mismatches;
    }
  }
  out.detail << "3000 plans, " << mismatches << " mismatches; ";
  out.require(mismatches == 0, "plan matches the interval-merge oracle");

  std::filesystem::create_directories(o.work_dir);
  const auto path = o.work_dir / "plan_oracle.fnsb";
  std::vector<LayerWeights> layers{random_layer(8, 1024, rng), random_layer(8, 1024, rng)};
  pack_store(path, layers);
  FlashReader serial(path, {1, 0, BypassMode::kOff});
  FlashReader wide(path, {32, 2, BypassMode::kOff});
  InMemoryRecordSource memory(layers, serial.manifest().record_stride);
  std::size_t differing = 0;
  for (int s = 0; s < 50; ++s) {
    const auto layer = static_cast<std::uint32_t>(s % 2);
    const auto set = random_subset(1024, 0.02 + 0.01 * (s % 20), rng);
    const auto a = serial.fetch(plan_reads(set, serial.manifest(), layer, 0), 1);
    const auto b = wide.fetch(plan_reads(set, wide.manifest(), layer, 2), 32);
    const auto c = memory.fetch(layer, set);
    if (a.records != b.records || a.records != c.records) ++differing;
  }
  out.detail << "fetch workers 1 vs 32: " << differing << " differing batches; ";
  out.require(differing == 0, "fetch content independent of workers and gap threshold");
}

// 7
void usage_properties(const AcceptanceOptions& o, Outcome& out) {
  LayerWeights dummy(1, 512);
  InMemoryRecordSource source(std::span<const LayerWeights>(&dummy, 1), 4096);
  std::ostringstream curve;
  curve << "seed,k,s_agg,increment\n";
  for (std::uint64_t seed = o.seed; seed < o.seed + 5; ++seed) {
    synth::ZipfTraceOptions zo;
    zo.n_tokens = 300;
    zo.topic.d_ffn = 512;
    zo.seed = seed;
    const auto sets = synth::zipf_correlated_trace(zo).layer_sets(0);
    const auto s = aggregated_usage(sets, 16);
    const auto inc = usage_increments(s);
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      out.require(s[k + 1] >= s[k], "s_agg nondecreasing (seed " + std::to_string(seed) + ")");
      curve << seed << ',' << k << ',' << s[k] << ',' << inc[k] << '\n';
    }
    std::uint64_t bytes[2] = {0, 0};
    const std::uint32_t windows[2] = {1, 4};
    for (int w = 0; w < 2; ++w) {
      NeuronCache cache(CacheConfig{0, 1, 512, 512, windows[w], OverflowPolicy::kError});
      for (const auto& set : sets) bytes[w] += cache.update_window(set, source).bytes_fetched;
    }
    out.require(bytes[1] <= bytes[0], "window 4 fetches no more than window 1 (seed " + std::to_string(seed) + ")");
    if (seed == o.seed) {
      out.detail << "increments k=0..5:";
      for (std::size_t k = 0; k < 6; ++k) out.detail << ' ' << fmt(inc[k], 3);
      out.detail << "; ";
    }
    out.detail << "seed " << seed << " bytes k1=" << bytes[0] << " k4=" << bytes[1] << "; ";
  }
  write_artifact(o, "usage_increments.csv", curve.str());
}

// 8
void predictor_suite(const AcceptanceOptions& o, Outcome& out) {
  std::mt19937_64 rng(o.seed + 8);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  TrainOptions wide;
  wide.rank = 4;
  wide.init_scale = 1.0;
  wide.seed = o.seed;
  auto params = init_predictor(0, 16, 64, wide);
  const float thresholds[] = {0.0f, 0.1f, 0.3f, 0.5f, 0.7f, 0.9f, 0.99f};
  std::size_t violations = 0;
  for (int s = 0; s < 100; ++s) {
    std::vector<float> x(16);
    for (auto& v : x) v = normal(rng);
    IndexSet previous;
    for (std::size_t t = 0; t < std::size(thresholds); ++t) {
      params.threshold = thresholds[t];
      const auto set = predict_active(params, x);
      if (t > 0 && !std::includes(previous.begin(), previous.end(), set.begin(), set.end())) ++violations;
      previous = set;
    }
  }
  out.require(violations == 0, "raising the threshold never adds neurons");

  const std::uint32_t dm = 5, df = 7, r = 3;
  const auto samples = synth::low_rank_samples(dm, df, 2, 12, o.seed + 80);
  const auto weights = balanced_class_weights(samples, df);
  std::vector<double> a(dm * r), b(r * df);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  const auto analytic = balanced_loss(a, b, r, dm, df, samples, weights, true);
  double diff2 = 0.0, norm2 = 0.0;
  auto probe = [&](std::vector<double>& p, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i], h = 1e-6;
      p[i] = keep + h;
      const double up = balanced_loss(a, b, r, dm, df, samples, weights, false).loss;
      p[i] = keep - h;
      const double down = balanced_loss(a, b, r, dm, df, samples, weights, false).loss;
      p[i] = keep;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - g[i]) * (numeric - g[i]);
      norm2 += g[i] * g[i];
    }
  };
  probe(a, analytic.grad_a);
  probe(b, analytic.grad_b);
  const double rel = std::sqrt(diff2 / norm2);
  out.detail << "gradient relative error " << fmt(rel, 3) << "; ";
  out.require(rel <= 1e-4, "analytic gradient matches central differences");

  const auto data = synth::low_rank_samples(16, 32, 2, 1500, o.seed + 81);
  std::span<const LabeledSample> all(data);
  TrainOptions train;
  train.rank = 2;
  train.epochs = 30;
  train.seed = o.seed;
  const auto trained = train_predictor(0, 16, 32, all.first(1000), train);
  const auto m = evaluate_predictor(trained, all.subspan(1000));
  out.detail << "held-out recall " << fmt(m.recall()) << " FPR " << fmt(m.false_positive_rate) << "; ";
  out.require(m.recall() >= 0.95, "rank-2 recall >= 0.95");
}

// 9
void friend_bundling(const AcceptanceOptions& o, Outcome& out) {
  const std::uint64_t record = 4096;
  auto run = [&](const ActivationTrace& trace, const char* name) {
    const auto stats = coactivation_matrix(trace, 0);
    const auto c = closest_friend_bundling_cost(trace, 0, stats, record);
    out.require(c.bundled_bytes == c.baseline_bytes + c.repeat_bytes + c.unneeded_bytes,
                std::string("byte ledger balances on ") + name);
    out.detail << name << " redundancy " << fmt(c.redundancy) << " reads " << c.bundled_reads << "/" << c.baseline_reads
               << "; ";
    return c.redundancy;
  };
  const double hub = run(synth::hub_trace(400, 128, 0.1, o.seed + 9), "hub");
  const double pairs = run(synth::paired_clique_trace(400, 128, 0.1, o.seed + 9), "pairs");
  out.require(hub > 1.0, "hub trace redundancy > 1");
  out.require(pairs <= 1.0, "paired trace redundancy <= 1");
}

// 10
void speculative_policy(const AcceptanceOptions& o, Outcome& out) {
  std::ostringstream csv;
  csv << "alpha,anchor,reuse\n";
  for (double alpha : {0.4, 0.6, 0.8}) {
    SpeculativeSimConfig c;
    c.lambda = 4;
    c.alpha = alpha;
    c.trials = 100;
    c.seed = o.seed + 10;
    const auto r = simulate_speculative_reuse(c);
    out.detail << "alpha " << alpha << ": anchor " << r.anchor << " reuse " << fmt(r.anchor_reuse_mean)
               << " vs keep-last " << fmt(r.keep_last_reuse_mean) << "; ";
    out.require(r.anchor_reuse_mean >= r.keep_last_reuse_mean, "anchor reuse >= keep-last at alpha " + fmt(alpha));
    for (std::size_t a = 0; a < r.reuse_by_anchor.size(); ++a) csv << alpha << ',' << a + 1 << ',' << r.reuse_by_anchor[a] << '\n';
  }
  write_artifact(o, "speculative_reuse.csv", csv.str());
}

// 11
void probe_plumbing(const AcceptanceOptions& o, Outcome& out) {
  std::filesystem::create_directories(o.work_dir);
  const auto path = o.work_dir / "probe.bin";
  write_probe_file(path, 32ull << 20, o.seed);
  ProbeOptions po;
  po.chunk_sizes = {4096, 16384, 32768, 65536};
  po.thread_counts = {1, 2, 4};
  po.seconds_per_cell = o.probe_seconds_per_cell;
  po.bypass = BypassMode::kTry;
  po.seed = o.seed;
  const auto grid = probe_throughput(path, po);
  std::filesystem::remove(path);
  const bool complete = grid.gib_per_s.size() == po.chunk_sizes.size() * po.thread_counts.size();
  const bool positive = std::all_of(grid.gib_per_s.begin(), grid.gib_per_s.end(), [](double v) { return v > 0.0; });
  out.require(complete && positive, "probe grid complete and positive");
  out.detail << "probe " << grid.gib_per_s.size() << " cells, 32 KiB x 4 threads " << fmt(grid.at(2, 2), 3)
             << " GiB/s (bypass " << (grid.bypass_cache ? "on" : "off") << "); ";
  write_artifact(o, "probe.csv", grid.to_csv());

  const ThroughputModel truth{100e-6, 2.0 * kGiB, 6.0 * kGiB, 8};
  const std::vector<std::uint64_t> chunks{4096, 16384, 32768, 65536, 131072, 262144, 1 << 20};
  const std::vector<unsigned> threads{1, 2, 4, 8, 16, 32};
  for (double noise : {0.0, 0.01}) {
    const auto fit = fit_throughput_model(synthesize_grid(truth, chunks, threads, noise, o.seed + 11)).model;
    auto close = [](double got, double want) { return std::abs(got - want) <= 0.05 * std::abs(want); };
    const bool ok = close(fit.t0_seconds, truth.t0_seconds) && close(fit.stream_bytes_per_s, truth.stream_bytes_per_s) &&
                    close(fit.max_bytes_per_s, truth.max_bytes_per_s) &&
                    close(fit.saturation_threads, truth.saturation_threads);
    out.detail << "noise " << noise << ": t0 " << fmt(fit.t0_seconds * 1e6) << "us B " << fmt(fit.stream_bytes_per_s / kGiB)
               << " GiB/s Bmax " << fmt(fit.max_bytes_per_s / kGiB) << " GiB/s p_sat " << fit.saturation_threads << "; ";
    out.require(ok, "fit recovers known parameters within 5% (noise " + fmt(noise) + ")");
  }
}

struct Criterion {
  int id;
  const char* name;
  const char* module;
  double limit;
  void (*run)(const AcceptanceOptions&, Outcome&);
};

constexpr Criterion kCriteria[] = {
    {1, "reference latency table", "cost_model", 1, table_reproduction},
    {2, "scenario ordering", "cost_model", 1, scenario_ordering},
    {3, "gated equivalence", "inference_engine", 10, gated_equivalence},
    {4, "cache invariants", "neuron_cache", 30, cache_invariants},
    {5, "bundling arithmetic", "weight_store", 1, bundling_arithmetic},
    {6, "read-plan oracle", "flash_reader", 20, read_plan_oracle},
    {7, "s_agg properties", "cost_model", 10, usage_properties},
    {8, "predictor suite", "sparsity_predictor", 60, predictor_suite},
    {9, "closest-friend negative result", "analysis", 10, friend_bundling},
    {10, "speculative window policy", "neuron_cache", 0, speculative_policy},
    {11, "throughput probe and fit", "flash_reader", 0, probe_plumbing},
};

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  AcceptanceOptions o = options;
  if (o.work_dir.empty()) o.work_dir = std::filesystem::temp_directory_path() / "flashffn-acceptance";
  std::vector<CriterionResult> results;
  for (const auto& c : kCriteria) {
    CriterionResult r{c.id, c.name, c.module, false, "", 0.0, c.limit};
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o, outcome);
      r.passed = outcome.passed;
    } catch (const std::exception& e) {
      outcome.detail << "error: " << e.what();
      r.passed = false;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit > 0 && r.seconds > c.limit) {
      r.passed = false;
      outcome.detail << "over time limit " << c.limit << " s; ";
    }
    r.detail = outcome.detail.str();
    if (o.on_result) o.on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_result_line(const CriterionResult& r) {
  std::ostringstream s;
  s << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " (" << r.module << ", " << fmt(r.seconds, 3)
    << " s): " << r.detail;
  return s.str();
}

ToyPipelineResult run_toy_pipeline(const ToyPipelineOptions& o) {
  ToyPipelineResult result;
  const ToyModel model(o.model);
  const auto& c = model.config();
  std::filesystem::create_directories(o.work_dir);
  const auto store = o.work_dir / "toy_store.fnsb";
  pack_store(store, model.ffn_layers(), {c.scalar_width, kDefaultRecordAlignment});

  const auto samples = collect_training_samples(model, o.train_tokens, o.seed + 11);
  std::vector<PredictorParams> predictors;
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    std::span<const LabeledSample> all(samples[l]);
    const std::size_t train_n = all.size() * 4 / 5;
    predictors.push_back(train_predictor(l, c.d_model, c.d_ffn, all.first(train_n), o.train));
    result.predictor_metrics.push_back(evaluate_predictor(predictors.back(), all.subspan(train_n)));
  }

  FlashReader reader(store, {o.workers, 0, o.bypass});
  EngineOptions eo;
  eo.window_k = o.window_k;
  std::mt19937_64 rng(o.seed + 12);
  for (std::uint32_t i = 0; i < o.prompt_tokens; ++i) eo.prompt.push_back(static_cast<std::uint32_t>(rng() % c.vocab));
  eo.n_tokens = o.new_tokens;
  eo.seed = o.seed;
  eo.oracle = &model.ffn_layers();
  result.run = run_generation(model, reader, predictors, eo);

  const double w = c.scalar_width;
  auto& f = result.footprint;
  f.embeddings = static_cast<double>(c.vocab) * c.d_model * w;
  f.attention = static_cast<double>(c.n_layers) * c.d_model * c.d_model * w;
  for (const auto& p : predictors) f.predictors += (p.factor_a.size() + p.factor_b.size()) * 4.0;
  f.ffn_total = static_cast<double>(c.n_layers) * c.d_ffn * (2.0 * c.d_model + 1.0) * w;

  result.s_agg = aggregated_usage(result.run.predicted, o.window_k);
  ToyScenarioInputs in;
  in.d_model = c.d_model;
  in.d_ffn = c.d_ffn;
  in.n_layers = c.n_layers;
  in.scalar_width = c.scalar_width;
  in.footprint = f;
  in.predicted_per_token = result.s_agg[1];
  in.window_union = result.s_agg[o.window_k];
  in.window_increment = result.s_agg[o.window_k] - result.s_agg[o.window_k - 1];
  in.throughput = o.throughput;
  in.threads = o.workers;
  result.scenarios = toy_scenarios(in);
  return result;
}

}  // namespace flashffn
