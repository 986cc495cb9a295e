// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// flashffn: command-line front end.
//
// Exit codes: 0 success, 1 failed criterion or runtime error, 2 usage error,
// 3 I/O error or corrupt input file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flashffn/acceptance.hpp"
#include "flashffn/analysis.hpp"
#include "flashffn/cost_model.hpp"
#include "flashffn/engine.hpp"
#include "flashffn/flash_reader.hpp"
#include "flashffn/predictor.hpp"
#include "flashffn/toy_model.hpp"
#include "flashffn/trace.hpp"
#include "flashffn/weight_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flashffn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failure on " + path.string());
}

fs::path in_report_dir(const std::string& report_dir, const std::string& explicit_path, const std::string& name) {
  const fs::path path = explicit_path.empty() ? fs::path(report_dir) / name : fs::path(explicit_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

json metrics_json(const PredictorMetrics& m) {
  return {{"false_negative_rate", m.false_negative_rate}, {"false_positive_rate", m.false_positive_rate},
          {"predicted_density", m.predicted_density},     {"true_density", m.true_density},
          {"recall", m.recall()},
          {"over_prediction", m.true_density > 0 ? m.predicted_density / m.true_density : 0.0}};
}

json model_json(const ThroughputModel& m) {
  return {{"t0_us", m.t0_seconds * 1e6},
          {"stream_gib_per_s", m.stream_bytes_per_s / kGiB},
          {"max_gib_per_s", std::isfinite(m.max_bytes_per_s) ? json(m.max_bytes_per_s / kGiB) : json(nullptr)},
          {"saturation_threads", m.saturation_threads}};
}

json scenarios_json(const std::vector<ScenarioRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.io.label},
                   {"dram_gb", r.dram_bytes / kGB},
                   {"flash_to_dram_gb", r.io.bytes_per_token / kGB},
                   {"throughput_gb_s", r.io.bytes_per_second / kGB},
                   {"io_latency_ms", r.io_ms}});
  }
  return out;
}

ToyModel load_model(const std::string& path) { return ToyModel(read_model_config(path)); }

// ---------------------------------------------------------------- gen-model

struct GenModelArgs {
  ToyModelConfig config;
  std::string out;
};

int cmd_gen_model(const GenModelArgs& a) {
  const ToyModel model(a.config);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_model_config(dir / "model.json", a.config);
  write_raw_layers(dir / "raw", model.ffn_layers());
  std::cout << "wrote " << (dir / "model.json").string() << " and " << (dir / "raw").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- pack

struct PackArgs {
  std::string raw, out;
  std::uint32_t alignment = kDefaultRecordAlignment;
  std::uint32_t scalar_width = 4;
};

int cmd_pack(const PackArgs& a) {
  const auto layers = read_raw_layers(a.raw);
  const auto m = pack_store(a.out, layers, {a.scalar_width, a.alignment});
  json j{{"schema", "flashffn.manifest/1"}, {"d_model", m.d_model},           {"d_ffn", m.d_ffn},
         {"n_layers", m.n_layers},          {"scalar_width", m.scalar_width}, {"record_alignment", m.record_alignment},
         {"record_stride", m.record_stride}, {"payload_bytes", m.payload_bytes()}, {"layer_offsets", m.layer_offsets},
         {"file_bytes", m.file_bytes()}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  std::string file;
  std::uint64_t file_mib = 256;
  std::vector<std::uint64_t> chunks{4096, 16384, 32768, 65536, 262144};
  std::vector<unsigned> threads{1, 2, 4, 8, 16, 32};
  double seconds = 0.25;
  std::string bypass = "try";
  std::uint64_t seed = 1;
  std::string out;
  std::string fit_out;
};

int cmd_probe(const ProbeArgs& a, const std::string& report_dir) {
  fs::path file = a.file;
  bool temporary = false;
  if (file.empty()) {
    file = in_report_dir(report_dir, "", "probe.bin");
    write_probe_file(file, a.file_mib << 20, a.seed);
    temporary = true;
  }
  ProbeOptions po;
  po.chunk_sizes = a.chunks;
  po.thread_counts = a.threads;
  po.seconds_per_cell = a.seconds;
  po.bypass = parse_bypass_mode(a.bypass);
  po.seed = a.seed;
  ThroughputGrid grid;
  try {
    grid = probe_throughput(file, po);
  } catch (...) {
    if (temporary) fs::remove(file);
    throw;
  }
  if (temporary) fs::remove(file);
  if (a.out.empty()) {
    std::cout << grid.to_csv();
  } else {
    write_text(a.out, grid.to_csv());
  }
  if (!a.fit_out.empty()) {
    const auto fit = fit_throughput_model(grid);
    json j{{"schema", "flashffn.throughput_fit/1"},
           {"model", model_json(fit.model)},
           {"rms_log_residual", fit.rms_log_residual},
           {"log_residuals", fit.log_residuals},
           {"bypass_cache", grid.bypass_cache},
           {"doubling_gain_16k_to_32k", chunk_doubling_gain(fit.model, 16384, a.threads.back())}};
    write_text(a.fit_out, j.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- train / eval

struct TrainArgs {
  std::string model, out;
  std::uint32_t samples = 400;
  double holdout = 0.2;
  RankPlan ranks{16, 32, 0};
  TrainOptions train;
  std::vector<float> thresholds;
};

int cmd_train(TrainArgs a) {
  const auto model = load_model(a.model);
  const auto& c = model.config();
  if (!a.thresholds.empty() && a.thresholds.size() != c.n_layers) {
    fail(ErrorKind::kUsage, "--thresholds needs one value per layer");
  }
  const auto samples = collect_training_samples(model, a.samples, a.train.seed + 11);
  std::vector<PredictorParams> params;
  json layers = json::array();
  for (std::uint32_t l = 0; l < c.n_layers; ++l) {
    TrainOptions o = a.train;
    o.rank = a.ranks.rank_for(l, c.n_layers);
    if (!a.thresholds.empty()) o.threshold = a.thresholds[l];
    std::span<const LabeledSample> all(samples[l]);
    const auto n_train = static_cast<std::size_t>(static_cast<double>(all.size()) * (1.0 - a.holdout));
    if (n_train == 0 || n_train >= all.size()) fail(ErrorKind::kUsage, "holdout leaves no train or test samples");
    params.push_back(train_predictor(l, c.d_model, c.d_ffn, all.first(n_train), o));
    auto j = metrics_json(evaluate_predictor(params.back(), all.subspan(n_train)));
    j["layer"] = l;
    j["rank"] = o.rank;
    j["threshold"] = o.threshold;
    layers.push_back(j);
  }
  write_predictors(a.out, params);
  std::cout << json{{"schema", "flashffn.predictor_metrics/1"}, {"split", "holdout"}, {"layers", layers}}.dump(2) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, predictors;
  std::uint32_t samples = 200;
  std::uint64_t seed = 99;
};

int cmd_eval(const EvalArgs& a) {
  const auto model = load_model(a.model);
  const auto params = read_predictors(a.predictors);
  if (params.size() != model.config().n_layers) fail(ErrorKind::kDimension, "predictor file does not match the model");
  const auto samples = collect_training_samples(model, a.samples, a.seed);
  json layers = json::array();
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto j = metrics_json(evaluate_predictor(params[l], samples[l]));
    j["layer"] = l;
    j["rank"] = params[l].rank;
    j["threshold"] = params[l].threshold;
    layers.push_back(j);
  }
  std::cout << json{{"schema", "flashffn.predictor_metrics/1"}, {"split", "fresh"}, {"layers", layers}}.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string model, store, predictors;
  std::uint32_t window = 4;
  std::uint32_t tokens = 64;
  std::uint32_t prompt_tokens = 16;
  std::uint64_t seed = 1;
  std::string sampling = "greedy";
  unsigned workers = 32;
  std::uint32_t gap = 0;
  std::string bypass = "off";
  double headroom = 0.1;
  std::string overflow = "shrink";
  std::size_t capacity = 0;
  std::string records_out, summary_out, trace_out, truth_out;
};

int cmd_run(const RunArgs& a, const std::string& report_dir) {
  const auto model = load_model(a.model);
  const auto& c = model.config();
  const auto predictors = read_predictors(a.predictors);
  FlashReader reader(a.store, {a.workers, a.gap, parse_bypass_mode(a.bypass)});
  const auto& m = reader.manifest();
  if (m.d_model != c.d_model || m.d_ffn != c.d_ffn || m.n_layers != c.n_layers) {
    fail(ErrorKind::kDimension, "store " + a.store + " does not match the model");
  }
  EngineOptions eo;
  eo.window_k = a.window;
  eo.req_headroom = a.headroom;
  eo.overflow = parse_overflow_policy(a.overflow);
  if (a.capacity > 0) eo.capacities.assign(c.n_layers, a.capacity);
  std::mt19937_64 rng(a.seed + 12);
  for (std::uint32_t i = 0; i < a.prompt_tokens; ++i) eo.prompt.push_back(static_cast<std::uint32_t>(rng() % c.vocab));
  eo.n_tokens = a.tokens;
  eo.sampling = parse_sampling(a.sampling);
  eo.seed = a.seed;
  eo.oracle = &model.ffn_layers();
  const auto result = run_generation(model, reader, predictors, eo);

  std::ostringstream records;
  write_token_records(records, result);
  write_text(in_report_dir(report_dir, a.records_out, "run_tokens.jsonl"), records.str());
  const auto summary = summary_json(result);
  write_text(in_report_dir(report_dir, a.summary_out, "run_summary.json"), summary + "\n");
  write_trace_jsonl(in_report_dir(report_dir, a.trace_out, "predicted_trace.jsonl"), result.predicted);
  write_trace_jsonl(in_report_dir(report_dir, a.truth_out, "true_trace.jsonl"), result.truth);
  std::cout << summary << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- cost

struct CostArgs {
  bool reference = false;
  std::string scenarios;
  std::string trace;
  std::uint32_t k_max = 8;
  std::uint64_t record_bytes = 0;
  std::string grid;
  double t0_us = 100.0, stream_gib = 2.0, max_gib = 6.0;
  std::uint32_t sat_threads = 8;
  unsigned threads = 32;
  std::string model;
  std::string out;
};

int cmd_cost(const CostArgs& a) {
  std::ostringstream text;
  if (a.reference) text << scenario_table_csv(reference_scenarios());
  if (!a.scenarios.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.scenarios));
    } catch (const json::exception& e) {
      fail(ErrorKind::kData, std::string("scenario file: ") + e.what());
    }
    const json& list = j.is_array() ? j : j.at("scenarios");
    std::vector<ScenarioRow> rows;
    for (const auto& s : list) {
      ScenarioRow r;
      r.io.label = s.at("label").get<std::string>();
      r.io.bytes_per_token = s.at("bytes").get<double>();
      r.io.bytes_per_second = s.at("throughput_gb_s").get<double>() * kGB;
      r.dram_bytes = s.value("dram_bytes", 0.0);
      r.io_ms = io_latency_ms(r.io);
      rows.push_back(r);
    }
    text << scenario_table_csv(rows);
  }
  if (!a.trace.empty()) {
    const auto trace = read_trace_jsonl(fs::path(a.trace));
    ThroughputModel tm{a.t0_us * 1e-6, a.stream_gib * kGiB, a.max_gib * kGiB, a.sat_threads};
    if (!a.grid.empty()) tm = fit_throughput_model(ThroughputGrid::from_csv(read_text(a.grid))).model;
    ModelFootprint fp;
    std::uint64_t record = a.record_bytes;
    if (!a.model.empty()) {
      const auto c = read_model_config(a.model);
      const double w = c.scalar_width;
      fp.embeddings = static_cast<double>(c.vocab) * c.d_model * w;
      fp.attention = static_cast<double>(c.n_layers) * c.d_model * c.d_model * w;
      if (record == 0) record = static_cast<std::uint64_t>((2.0 * c.d_model + 1.0) * w);
    }
    if (record == 0) fail(ErrorKind::kUsage, "--record-bytes is required without --model");
    fp.ffn_total = static_cast<double>(trace.n_layers) * trace.d_ffn * static_cast<double>(record);
    text << tradeoff_csv(tradeoff_sweep(trace, tm, a.k_max, record, fp, a.threads));
  }
  if (!a.reference && a.scenarios.empty() && a.trace.empty()) {
    fail(ErrorKind::kUsage, "cost needs --reference, --scenarios or --trace");
  }
  if (a.out.empty()) {
    std::cout << text.str();
  } else {
    write_text(a.out, text.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string trace;
  std::string truth;
  int layer = -1;
  std::string norm = "anchor";
  std::uint64_t record_bytes = 4096;
  std::uint32_t window = 4;
  std::uint32_t k_max = 16;
  std::string out_dir;
};

int cmd_analyze(const AnalyzeArgs& a, const std::string& report_dir) {
  const auto trace = read_trace_jsonl(fs::path(a.trace));
  const fs::path dir = a.out_dir.empty() ? fs::path(report_dir) : fs::path(a.out_dir);
  const auto norm = parse_coactivation_norm(a.norm);
  json summary{{"schema", "flashffn.analysis/1"}, {"trace", a.trace}, {"normalisation", a.norm}};
  json layers = json::array();
  for (std::uint32_t l = 0; l < trace.n_layers; ++l) {
    if (a.layer >= 0 && static_cast<std::uint32_t>(a.layer) != l) continue;
    const auto st = coactivation_matrix(trace, l, norm);
    std::ostringstream csv;
    csv.precision(8);
    csv << "neuron,activity,friend1,p1,friend4,p4,friend8,p8\n";
    const auto p1 = st.friend_probabilities(1), p4 = st.friend_probabilities(4), p8 = st.friend_probabilities(8);
    for (NeuronIndex i = 0; i < st.d_ffn; ++i) {
      const auto& f = st.friends[i];
      auto friend_at = [&](std::size_t r) { return f.size() >= r ? std::to_string(f[r - 1]) : std::string(); };
      auto prob = [](double v) { return std::isnan(v) ? std::string() : std::to_string(v); };
      csv << i << ',' << st.activity[i] << ',' << friend_at(1) << ',' << prob(p1[i]) << ',' << friend_at(4) << ','
          << prob(p4[i]) << ',' << friend_at(8) << ',' << prob(p8[i]) << '\n';
    }
    write_text(dir / ("coactivation_layer" + std::to_string(l) + ".csv"), csv.str());
    const auto cost = closest_friend_bundling_cost(trace, l, st, a.record_bytes);
    layers.push_back({{"layer", l},
                      {"power_law_slope", st.power_law_slope()},
                      {"activity_histogram_log2", st.activity_histogram()},
                      {"bundling",
                       {{"baseline_bytes", cost.baseline_bytes},
                        {"bundled_bytes", cost.bundled_bytes},
                        {"repeat_bytes", cost.repeat_bytes},
                        {"unneeded_bytes", cost.unneeded_bytes},
                        {"baseline_reads", cost.baseline_reads},
                        {"bundled_reads", cost.bundled_reads},
                        {"redundancy", cost.redundancy}}}});
  }
  summary["layers"] = layers;

  const auto s = aggregated_usage(trace, std::min<std::uint32_t>(a.k_max, static_cast<std::uint32_t>(trace.size())));
  const auto inc = usage_increments(s);
  std::ostringstream usage;
  usage.precision(8);
  usage << "k,s_agg,increment\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    usage << k << ',' << s[k] << ',';
    if (k < inc.size()) usage << inc[k];
    usage << '\n';
  }
  write_text(dir / "usage.csv", usage.str());

  ActivationTrace truth;
  SparsityInputs in;
  in.predicted = &trace;
  if (!a.truth.empty()) {
    truth = read_trace_jsonl(fs::path(a.truth));
    in.truth = &truth;
  }
  const auto cached = windowed_union_sizes(trace, a.window);
  in.cached_rows = &cached;
  const auto report = sparsity_report(in);
  write_text(dir / "sparsity.csv", report.to_csv());
  write_text(dir / "sparsity.json", report.to_json() + "\n");
  write_text(dir / "analysis.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- reproduce

struct ReproduceArgs {
  std::string work_dir;
  std::string store;
  std::uint64_t seed = 1;
  double probe_seconds = 0.02;
  bool skip_pipeline = false;
};

int cmd_reproduce(const ReproduceArgs& a, const std::string& report_dir_arg) {
  const fs::path report_dir = report_dir_arg;
  if (!a.store.empty()) {
    const auto m = read_manifest(a.store);
    std::cout << "store " << a.store << ": " << m.n_layers << " layers, d_model " << m.d_model << ", d_ffn " << m.d_ffn
              << "\n";
  }
  const fs::path work = a.work_dir.empty() ? fs::temp_directory_path() / "flashffn-reproduce" : fs::path(a.work_dir);

  AcceptanceOptions ao;
  ao.seed = a.seed;
  ao.work_dir = work;
  ao.report_dir = report_dir;
  ao.probe_seconds_per_cell = a.probe_seconds;
  std::ostringstream lines;
  ao.on_result = [&](const CriterionResult& r) {
    const auto line = format_result_line(r);
    std::cout << line << std::endl;
    lines << line << '\n';
  };
  const auto results = run_acceptance(ao);
  std::size_t failed = 0;
  json criteria = json::array();
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    criteria.push_back({{"id", r.id}, {"name", r.name}, {"module", r.module}, {"passed", r.passed},
                        {"seconds", r.seconds}, {"detail", r.detail}});
  }
  write_text(report_dir / "acceptance.txt", lines.str());

  const auto reference = reference_scenarios();
  json summary{{"schema", "flashffn.reproduce/1"},
               {"seed", a.seed},
               {"criteria", criteria},
               {"criteria_passed", results.size() - failed},
               {"reference_scenarios", scenarios_json(reference)}};

  if (!a.skip_pipeline) {
    ProbeOptions po;
    po.chunk_sizes = {4096, 16384, 32768, 65536, 262144};
    po.thread_counts = {1, 2, 4, 8};
    po.seconds_per_cell = a.probe_seconds;
    po.seed = a.seed;
    fs::create_directories(work);
    const auto probe_file = work / "probe.bin";
    write_probe_file(probe_file, 64ull << 20, a.seed);
    const auto grid = probe_throughput(probe_file, po);
    fs::remove(probe_file);
    write_text(report_dir / "probe_grid.csv", grid.to_csv());
    ThroughputModel tm{100e-6, 2.0 * kGiB, 6.0 * kGiB, 8};
    std::string source = "fallback";
    try {
      tm = fit_throughput_model(grid).model;
      source = "fitted";
    } catch (const Error& e) {
      std::cerr << "warning: throughput fit failed (" << e.what() << "), using fallback model\n";
    }

    ToyPipelineOptions po2;
    po2.model.seed = a.seed;
    po2.train.rank = 16;
    po2.seed = a.seed;
    po2.work_dir = work;
    po2.throughput = tm;
    const auto pipe = run_toy_pipeline(po2);
    write_text(report_dir / "toy_scenarios.csv", scenario_table_csv(pipe.scenarios));
    write_text(report_dir / "run_summary.json", summary_json(pipe.run) + "\n");
    std::ostringstream records;
    write_token_records(records, pipe.run);
    write_text(report_dir / "run_tokens.jsonl", records.str());
    json metrics = json::array();
    for (const auto& m : pipe.predictor_metrics) metrics.push_back(metrics_json(m));
    summary["toy"] = {{"throughput_model", model_json(tm)},
                      {"throughput_source", source},
                      {"scenarios", scenarios_json(pipe.scenarios)},
                      {"predictor_metrics", metrics},
                      {"s_agg", pipe.s_agg},
                      {"footprint_bytes",
                       {{"embeddings", pipe.footprint.embeddings},
                        {"attention", pipe.footprint.attention},
                        {"predictors", pipe.footprint.predictors},
                        {"ffn_total", pipe.footprint.ffn_total}}}};
    std::cout << "\ntoy model, five loading configurations:\n" << scenario_table_csv(pipe.scenarios);
  }
  std::cout << "\nreference configurations:\n" << scenario_table_csv(reference);
  write_text(report_dir / "summary.json", summary.dump(2) + "\n");
  fs::remove_all(work);
  std::cout << "\n" << results.size() - failed << "/" << results.size() << " criteria passed; report in "
            << report_dir.string() << "\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return kExitUsage;
    case ErrorKind::kIo:
    case ErrorKind::kCorrupt: return kExitIo;
    default: return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashffn: flash-backed sparse FFN inference toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file of option values; flags on the command line win");
  std::string report_dir = "flashffn-report";
  app.add_option("--report-dir", report_dir, "Directory for reports and default outputs")
      ->envname("FLASHFFN_REPORT_DIR")
      ->capture_default_str();

  GenModelArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a seeded toy model and dump its FFN layers");
  gen_cmd->add_option("--out", gen.out, "Output directory (model.json, raw/)")->required();
  gen_cmd->add_option("--d-model", gen.config.d_model, "Hidden size")->capture_default_str();
  gen_cmd->add_option("--d-ffn", gen.config.d_ffn, "FFN neurons per layer")->capture_default_str();
  gen_cmd->add_option("--layers", gen.config.n_layers, "Number of layers")->capture_default_str();
  gen_cmd->add_option("--vocab", gen.config.vocab, "Vocabulary size")->capture_default_str();
  gen_cmd->add_option("--scalar-width", gen.config.scalar_width, "Bytes per stored scalar (4 or 2)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.config.seed, "Model seed")->capture_default_str();
  gen_cmd->add_option("--ffn-bias", gen.config.ffn_bias, "Shared FFN bias offset")->capture_default_str();
  gen_cmd->add_option("--context-decay", gen.config.context_decay, "Attention context decay")->capture_default_str();

  PackArgs pack;
  auto* pack_cmd = app.add_subcommand("pack", "Pack raw per-layer matrices into a bundled store");
  pack_cmd->add_option("--raw", pack.raw, "Raw layer directory (meta.json, layer_<l>_{up,down,bias}.f32)")
      ->required()
      ->check(CLI::ExistingDirectory);
  pack_cmd->add_option("--out", pack.out, "Store file to write")->required();
  pack_cmd->add_option("--alignment", pack.alignment, "Record alignment in bytes (power of two)")->capture_default_str();
  pack_cmd->add_option("--scalar-width", pack.scalar_width, "Stored scalar width (4 or 2)")->capture_default_str();

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Measure random-read throughput over chunk sizes and threads");
  probe_cmd->add_option("--file", probe.file, "File to read; omitted = write a scratch file")->check(CLI::ExistingFile);
  probe_cmd->add_option("--file-mib", probe.file_mib, "Scratch file size in MiB")->capture_default_str();
  probe_cmd->add_option("--chunks", probe.chunks, "Chunk sizes in bytes")->delimiter(',')->capture_default_str();
  probe_cmd->add_option("--threads", probe.threads, "Thread counts")->delimiter(',')->capture_default_str();
  probe_cmd->add_option("--seconds", probe.seconds, "Seconds per grid cell")->capture_default_str();
  probe_cmd->add_option("--bypass", probe.bypass, "Page-cache bypass: require, try or off")
      ->check(CLI::IsMember({"require", "try", "off"}))
      ->capture_default_str();
  probe_cmd->add_option("--seed", probe.seed, "Offset seed")->capture_default_str();
  probe_cmd->add_option("--out", probe.out, "CSV output (default stdout)");
  probe_cmd->add_option("--fit-out", probe.fit_out, "Also fit the throughput model and write it as JSON");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-predictor", "Train per-layer low-rank activation predictors");
  train_cmd->add_option("--model", train.model, "model.json")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Predictor file to write")->required();
  train_cmd->add_option("--samples", train.samples, "Tokens of dense-path samples")->capture_default_str();
  train_cmd->add_option("--holdout", train.holdout, "Held-out fraction for the reported metrics")->capture_default_str();
  train_cmd->add_option("--rank", train.ranks.default_rank, "Rank for most layers")->capture_default_str();
  train_cmd->add_option("--sensitive-rank", train.ranks.sensitive_rank, "Rank for the last layers")->capture_default_str();
  train_cmd->add_option("--sensitive-layers", train.ranks.sensitive_layers, "How many last layers get the larger rank")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.train.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", train.train.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--threshold", train.train.threshold, "Sigmoid threshold")->capture_default_str();
  train_cmd->add_option("--thresholds", train.thresholds, "Per-layer thresholds")->delimiter(',');
  train_cmd->add_option("--seed", train.train.seed, "Training seed")->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval-predictor", "Evaluate predictors on fresh dense-path samples");
  eval_cmd->add_option("--model", eval.model, "model.json")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--predictors", eval.predictors, "Predictor file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--samples", eval.samples, "Tokens of samples")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Sample seed")->capture_default_str();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Generate tokens through the flash store and neuron cache");
  run_cmd->add_option("--model", run.model, "model.json")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--store", run.store, "Bundled store")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--predictors", run.predictors, "Predictor file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--window", run.window, "Window size k in tokens (includes the current token)")->capture_default_str();
  run_cmd->add_option("--tokens", run.tokens, "Tokens to generate after the prompt")->capture_default_str();
  run_cmd->add_option("--prompt-tokens", run.prompt_tokens, "Seeded prompt length")->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Prompt and sampling seed")->capture_default_str();
  run_cmd->add_option("--sampling", run.sampling, "greedy or nucleus")
      ->check(CLI::IsMember({"greedy", "nucleus"}))
      ->capture_default_str();
  run_cmd->add_option("--workers", run.workers, "Read threads")->capture_default_str();
  run_cmd->add_option("--gap", run.gap, "Read-plan gap threshold in records")->capture_default_str();
  run_cmd->add_option("--bypass", run.bypass, "Page-cache bypass: require, try or off")
      ->check(CLI::IsMember({"require", "try", "off"}))
      ->capture_default_str();
  run_cmd->add_option("--headroom", run.headroom, "Capacity headroom over the calibrated peak")->capture_default_str();
  run_cmd->add_option("--overflow", run.overflow, "shrink or error")
      ->check(CLI::IsMember({"shrink", "error"}))
      ->capture_default_str();
  run_cmd->add_option("--capacity", run.capacity, "Fixed per-layer capacity; 0 = calibrate")->capture_default_str();
  run_cmd->add_option("--records-out", run.records_out, "Per-token JSONL (default <report-dir>/run_tokens.jsonl)");
  run_cmd->add_option("--summary-out", run.summary_out, "Summary JSON (default <report-dir>/run_summary.json)");
  run_cmd->add_option("--trace-out", run.trace_out, "Predicted trace (default <report-dir>/predicted_trace.jsonl)");
  run_cmd->add_option("--truth-out", run.truth_out, "ReLU trace (default <report-dir>/true_trace.jsonl)");

  CostArgs cost;
  auto* cost_cmd = app.add_subcommand("cost", "I/O latency tables and the window tradeoff sweep");
  cost_cmd->add_flag("--reference", cost.reference, "Emit the five reference configurations");
  cost_cmd->add_option("--scenarios", cost.scenarios, "JSON list of {label, bytes, throughput_gb_s}")
      ->check(CLI::ExistingFile);
  cost_cmd->add_option("--trace", cost.trace, "Trace JSONL for the tradeoff sweep")->check(CLI::ExistingFile);
  cost_cmd->add_option("--k-max", cost.k_max, "Largest number of past tokens kept")->capture_default_str();
  cost_cmd->add_option("--record-bytes", cost.record_bytes, "Bytes per neuron record");
  cost_cmd->add_option("--grid", cost.grid, "Probe CSV to fit the throughput model from")->check(CLI::ExistingFile);
  cost_cmd->add_option("--t0-us", cost.t0_us, "Latency to first byte (without --grid)")->capture_default_str();
  cost_cmd->add_option("--stream-gib", cost.stream_gib, "Per-thread stream bandwidth GiB/s")->capture_default_str();
  cost_cmd->add_option("--max-gib", cost.max_gib, "Device ceiling GiB/s")->capture_default_str();
  cost_cmd->add_option("--sat-threads", cost.sat_threads, "Thread saturation point")->capture_default_str();
  cost_cmd->add_option("--threads", cost.threads, "Read threads")->capture_default_str();
  cost_cmd->add_option("--model", cost.model, "model.json for the resident-weight footprint")->check(CLI::ExistingFile);
  cost_cmd->add_option("--out", cost.out, "CSV output (default stdout)");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Coactivation, closest-friend bundling and sparsity reports");
  analyze_cmd->add_option("--trace", analyze.trace, "Trace JSONL")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--truth", analyze.truth, "Ground-truth trace JSONL for the sparsity report")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--layer", analyze.layer, "Only this layer (-1 = all)")->capture_default_str();
  analyze_cmd->add_option("--norm", analyze.norm, "Coactivation normalisation: anchor or union")
      ->check(CLI::IsMember({"anchor", "union"}))
      ->capture_default_str();
  analyze_cmd->add_option("--record-bytes", analyze.record_bytes, "Bytes per record in the bundling ledger")
      ->capture_default_str();
  analyze_cmd->add_option("--window", analyze.window, "Window for the cached-rows series")->capture_default_str();
  analyze_cmd->add_option("--k-max", analyze.k_max, "Largest window for the usage curve")->capture_default_str();
  analyze_cmd->add_option("--out-dir", analyze.out_dir, "Output directory (default report dir)");

  ReproduceArgs repro;
  auto* repro_cmd = app.add_subcommand("reproduce", "Run the acceptance suite and write the report bundle");
  repro_cmd->add_option("--work-dir", repro.work_dir, "Scratch directory");
  repro_cmd->add_option("--store", repro.store, "Existing store to validate first");
  repro_cmd->add_option("--seed", repro.seed, "Suite seed")->capture_default_str();
  repro_cmd->add_option("--probe-seconds", repro.probe_seconds, "Seconds per probe cell")->capture_default_str();
  repro_cmd->add_flag("--skip-pipeline", repro.skip_pipeline, "Only run the criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_model(gen);
    if (*pack_cmd) return cmd_pack(pack);
    if (*probe_cmd) return cmd_probe(probe, report_dir);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*run_cmd) return cmd_run(run, report_dir);
    if (*cost_cmd) return cmd_cost(cost);
    if (*analyze_cmd) return cmd_analyze(analyze, report_dir);
    if (*repro_cmd) return cmd_reproduce(repro, report_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
