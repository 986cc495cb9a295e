// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// ReLU FFN kernels. Each has a serial reference and an OpenMP variant; the
// parallel ones split output elements across threads and accumulate every
// element in the same order as the serial loop, so results are bit-identical.

#pragma once

#include <span>

#include "flashffn/common.hpp"
#include "flashffn/neuron_cache.hpp"
#include "flashffn/weight_store.hpp"

namespace flashffn::kernels {

/// y = sum_j relu(up_j . x + bias_j) * down_j over the cache's resident rows.
void sparse_ffn_serial(std::span<const float> x, const CacheViews& views, std::span<float> y);
void sparse_ffn_parallel(std::span<const float> x, const CacheViews& views, std::span<float> y);

/// Same sum over every neuron of a dense layer.
void dense_ffn_serial(std::span<const float> x, const LayerWeights& w, std::span<float> y);
void dense_ffn_parallel(std::span<const float> x, const LayerWeights& w, std::span<float> y);

/// Dense layer with the pre-activations of neurons outside `keep` forced to zero.
void masked_dense_ffn(std::span<const float> x, const LayerWeights& w, std::span<const NeuronIndex> keep,
                      std::span<float> y);

/// Pre-activations up_j . x + bias_j for every neuron.
void dense_preactivations(std::span<const float> x, const LayerWeights& w, std::span<float> out);

}  // namespace flashffn::kernels
