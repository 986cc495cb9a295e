// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// The end-to-end acceptance suite, shared by the acceptance test binary and
// the `reproduce` subcommand.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flashffn/cost_model.hpp"
#include "flashffn/engine.hpp"

namespace flashffn {

struct CriterionResult {
  int id = 0;
  std::string name;
  std::string module;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double time_limit = 0.0;  // 0 = no bound
};

struct AcceptanceOptions {
  std::uint64_t seed = 1;
  std::filesystem::path work_dir;       // scratch files; created if missing
  std::filesystem::path report_dir;     // optional CSV/JSON artifacts
  double probe_seconds_per_cell = 0.02;
  std::function<void(const CriterionResult&)> on_result;
};

/// Runs criteria 1..11 in order. A criterion that throws is reported as failed.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

std::string format_result_line(const CriterionResult& r);

struct ToyPipelineOptions {
  ToyModelConfig model;
  std::uint32_t train_tokens = 400;
  TrainOptions train;
  std::uint32_t prompt_tokens = 16;
  std::uint32_t new_tokens = 64;
  std::uint32_t window_k = 4;
  unsigned workers = 32;
  BypassMode bypass = BypassMode::kOff;
  std::uint64_t seed = 1;
  std::filesystem::path work_dir;
  ThroughputModel throughput;
};

struct ToyPipelineResult {
  GenerationResult run;
  std::vector<PredictorMetrics> predictor_metrics;
  std::vector<ScenarioRow> scenarios;
  std::vector<double> s_agg;
  ModelFootprint footprint;
};

/// Builds and packs a toy model, trains its predictors, generates through the
/// flash store and prices the five loading configurations for it.
ToyPipelineResult run_toy_pipeline(const ToyPipelineOptions& options);

}  // namespace flashffn
