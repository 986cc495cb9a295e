// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts.

#include <algorithm>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "flashffn/analysis.hpp"
#include "flashffn/kernels.hpp"
#include "flashffn/synthetic.hpp"
#include "test_util.hpp"

using namespace flashffn;

namespace {

constexpr std::size_t kDModel = 512;
constexpr std::size_t kDFfn = 4096;

struct Resident {
  Resident(const LayerWeights& w, double fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const IndexSet rows = flashffn::testing::random_subset(static_cast<std::uint32_t>(w.d_ffn), fraction, rng);
    pointer.assign(rows.begin(), rows.end());
    const std::size_t width = 2 * w.d_model;
    matrix.resize(pointer.size() * width);
    for (std::size_t r = 0; r < pointer.size(); ++r) {
      std::copy_n(w.up_row(pointer[r]).begin(), w.d_model, matrix.begin() + r * width);
      std::copy_n(w.down_row(pointer[r]).begin(), w.d_model, matrix.begin() + r * width + w.d_model);
      bias.push_back(w.bias[pointer[r]]);
    }
    views.up = {matrix.data(), pointer.size(), w.d_model, width};
    views.down = {matrix.data() + w.d_model, w.d_model, pointer.size(), width};
    views.bias = bias;
    views.pointer = pointer;
  }
  std::vector<float> matrix, bias;
  std::vector<NeuronIndex> pointer;
  CacheViews views;
};

const LayerWeights& layer() {
  static const LayerWeights w = flashffn::testing::random_layer(kDModel, kDFfn, 1);
  return w;
}

template <auto Kernel>
void BM_Sparse(benchmark::State& state) {
  Resident cache(layer(), static_cast<double>(state.range(0)) / 100.0, 2);
  const auto x = flashffn::testing::random_vector(kDModel, 3);
  std::vector<float> y(kDModel);
  for (auto _ : state) {
    Kernel(x, cache.views, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["rows"] = static_cast<double>(cache.pointer.size());
}

template <auto Kernel>
void BM_Dense(benchmark::State& state) {
  const auto x = flashffn::testing::random_vector(kDModel, 3);
  std::vector<float> y(kDModel);
  for (auto _ : state) {
    Kernel(x, layer(), y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Counts>
void BM_Coactivation(benchmark::State& state) {
  synth::ZipfTraceOptions o;
  o.n_tokens = static_cast<std::uint32_t>(state.range(0));
  o.seed = 5;
  const auto trace = synth::zipf_correlated_trace(o);
  const auto sets = trace.layer_sets(0);
  for (auto _ : state) benchmark::DoNotOptimize(Counts(sets, trace.d_ffn));
}

}  // namespace

BENCHMARK(BM_Sparse<kernels::sparse_ffn_serial>)->Name("sparse_ffn/serial")->Arg(5)->Arg(25);
BENCHMARK(BM_Sparse<kernels::sparse_ffn_parallel>)->Name("sparse_ffn/parallel")->Arg(5)->Arg(25);
BENCHMARK(BM_Dense<kernels::dense_ffn_serial>)->Name("dense_ffn/serial");
BENCHMARK(BM_Dense<kernels::dense_ffn_parallel>)->Name("dense_ffn/parallel");
BENCHMARK(BM_Coactivation<coactivation_counts_serial>)->Name("coactivation/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Coactivation<coactivation_counts_parallel>)->Name("coactivation/parallel")->Arg(256)->Arg(1024);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
