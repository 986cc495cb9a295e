// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/kernels.hpp"

#include <algorithm>
#include <vector>

#include <omp.h>

namespace flashffn::kernels {
namespace {

double dot(const float* a, std::span<const float> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(a[i]) * x[i];
  return s;
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

void check_dims(std::span<const float> x, std::span<float> y, std::size_t d_model) {
  if (x.size() != d_model || y.size() != d_model) {
    fail(ErrorKind::kDimension, "dimension mismatch: expected vectors of length " + std::to_string(d_model));
  }
}

// Accumulates y[lo, hi) += sum_j act[j] * rows[j][lo, hi) in j order.
void accumulate_range(std::span<const double> act, const float* rows, std::size_t stride, std::size_t lo,
                      std::size_t hi, std::span<float> y) {
  std::vector<double> acc(hi - lo, 0.0);
  for (std::size_t j = 0; j < act.size(); ++j) {
    const double a = act[j];
    if (a == 0.0) continue;
    const float* row = rows + j * stride;
    for (std::size_t i = lo; i < hi; ++i) acc[i - lo] += a * row[i];
  }
  for (std::size_t i = lo; i < hi; ++i) y[i] = static_cast<float>(acc[i - lo]);
}

void accumulate_parallel(std::span<const double> act, const float* rows, std::size_t stride, std::span<float> y) {
  const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel
  {
    const std::ptrdiff_t threads = omp_get_num_threads();
    const std::ptrdiff_t id = omp_get_thread_num();
    const std::ptrdiff_t lo = n * id / threads;
    const std::ptrdiff_t hi = n * (id + 1) / threads;
    if (lo < hi) accumulate_range(act, rows, stride, lo, hi, y);
  }
}

}  // namespace

void sparse_ffn_serial(std::span<const float> x, const CacheViews& views, std::span<float> y) {
  check_dims(x, y, views.up.cols);
  const std::size_t m = views.num_used();
  std::vector<double> act(m);
  for (std::size_t j = 0; j < m; ++j) act[j] = relu(dot(views.up.data + j * views.up.row_stride, x) + views.bias[j]);
  accumulate_range(act, views.down.data, views.down.col_stride, 0, y.size(), y);
}

void sparse_ffn_parallel(std::span<const float> x, const CacheViews& views, std::span<float> y) {
  check_dims(x, y, views.up.cols);
  const auto m = static_cast<std::ptrdiff_t>(views.num_used());
  std::vector<double> act(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    act[j] = relu(dot(views.up.data + j * views.up.row_stride, x) + views.bias[j]);
  }
  accumulate_parallel(act, views.down.data, views.down.col_stride, y);
}

void dense_ffn_serial(std::span<const float> x, const LayerWeights& w, std::span<float> y) {
  check_dims(x, y, w.d_model);
  std::vector<double> act(w.d_ffn);
  for (std::size_t j = 0; j < w.d_ffn; ++j) act[j] = relu(dot(w.up.data() + j * w.d_model, x) + w.bias[j]);
  accumulate_range(act, w.down.data(), w.d_model, 0, y.size(), y);
}

void dense_ffn_parallel(std::span<const float> x, const LayerWeights& w, std::span<float> y) {
  check_dims(x, y, w.d_model);
  const auto m = static_cast<std::ptrdiff_t>(w.d_ffn);
  std::vector<double> act(w.d_ffn);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) act[j] = relu(dot(w.up.data() + j * w.d_model, x) + w.bias[j]);
  accumulate_parallel(act, w.down.data(), w.d_model, y);
}

void masked_dense_ffn(std::span<const float> x, const LayerWeights& w, std::span<const NeuronIndex> keep,
                      std::span<float> y) {
  check_dims(x, y, w.d_model);
  std::vector<double> act(w.d_ffn, 0.0);
  for (auto j : keep) {
    if (j >= w.d_ffn) fail(ErrorKind::kDimension, "mask index out of range");
    act[j] = relu(dot(w.up.data() + j * w.d_model, x) + w.bias[j]);
  }
  accumulate_range(act, w.down.data(), w.d_model, 0, y.size(), y);
}

void dense_preactivations(std::span<const float> x, const LayerWeights& w, std::span<float> out) {
  if (x.size() != w.d_model || out.size() != w.d_ffn) fail(ErrorKind::kDimension, "dimension mismatch");
  for (std::size_t j = 0; j < w.d_ffn; ++j) out[j] = static_cast<float>(dot(w.up.data() + j * w.d_model, x) + w.bias[j]);
}

}  // namespace flashffn::kernels
