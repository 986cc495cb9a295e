// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Low-rank activation predictor.
//
// For an attention output x (d_model), the predictor scores every FFN neuron
// with sigmoid((x^T A) B) where A is d_model x r and B is r x d_ffn. Neurons
// scoring strictly above the layer's threshold are predicted active.
//
// Training minimises class-balanced binary cross-entropy: positive and
// negative terms are reweighted by inverse class frequency over the layer's
// training labels, so both classes carry half of the total weight.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flashffn/common.hpp"

namespace flashffn {

struct PredictorParams {
  std::uint32_t layer = 0;
  std::uint32_t rank = 0;
  std::uint32_t d_model = 0;
  std::uint32_t d_ffn = 0;
  float threshold = 0.5f;
  std::vector<float> factor_a;  // d_model x rank, row-major
  std::vector<float> factor_b;  // rank x d_ffn, row-major

  /// Pre-sigmoid scores (x^T A) B, accumulated in double.
  std::vector<double> logits(std::span<const float> x) const;
  std::vector<double> scores(std::span<const float> x) const;
  bool operator==(const PredictorParams&) const = default;
};

struct LabeledSample {
  std::vector<float> attention_output;
  IndexSet active;  // neurons with positive pre-activation
};

struct PredictorMetrics {
  double false_negative_rate = 0.0;  // FN / (TP + FN)
  double false_positive_rate = 0.0;  // FP / (FP + TN)
  double predicted_density = 0.0;
  double true_density = 0.0;
  std::uint64_t true_positive = 0, false_positive = 0, true_negative = 0, false_negative = 0;

  double recall() const { return 1.0 - false_negative_rate; }
};

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

struct TrainOptions {
  std::uint32_t rank = 8;
  std::uint32_t epochs = 30;
  double learning_rate = 1e-2;
  std::size_t batch_size = 32;
  float threshold = 0.5f;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
};

/// Ranks per layer: a uniform default with a larger rank for the last
/// `sensitive_layers` layers.
struct RankPlan {
  std::uint32_t default_rank = 8;
  std::uint32_t sensitive_rank = 16;
  std::uint32_t sensitive_layers = 0;

  std::uint32_t rank_for(std::uint32_t layer, std::uint32_t n_layers) const {
    return layer + sensitive_layers >= n_layers ? sensitive_rank : default_rank;
  }
};

/// Inverse-frequency weights w_pos = N / (2 n_pos), w_neg = N / (2 n_neg).
/// Throws Error(kData) naming the layer when either class is absent.
ClassWeights balanced_class_weights(std::span<const LabeledSample> samples, std::uint32_t d_ffn,
                                    std::uint32_t layer = 0);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_a;  // same layout as factor_a
  std::vector<double> grad_b;  // same layout as factor_b
};

/// Mean class-balanced BCE over all (sample, neuron) pairs, with its analytic
/// gradient in A and B.
LossAndGradient balanced_loss(std::span<const double> factor_a, std::span<const double> factor_b,
                              std::uint32_t rank, std::uint32_t d_model, std::uint32_t d_ffn,
                              std::span<const LabeledSample> samples, ClassWeights weights,
                              bool with_gradient = true);

PredictorParams init_predictor(std::uint32_t layer, std::uint32_t d_model, std::uint32_t d_ffn,
                               const TrainOptions& options);

/// Adam on mini-batches; deterministic for a given seed.
PredictorParams train_predictor(std::uint32_t layer, std::uint32_t d_model, std::uint32_t d_ffn,
                                std::span<const LabeledSample> samples, const TrainOptions& options);

IndexSet predict_active(const PredictorParams& params, std::span<const float> attention_output);

PredictorMetrics evaluate_predictor(const PredictorParams& params, std::span<const LabeledSample> samples);

// Predictor file: "FNPR" u32 version u32 n_layers, then per layer
// u32 layer, u32 rank, u32 d_model, u32 d_ffn, f32 threshold, f32 A[d_model*rank], f32 B[rank*d_ffn].
void write_predictors(const std::filesystem::path& path, std::span<const PredictorParams> params);
std::vector<PredictorParams> read_predictors(const std::filesystem::path& path);

}  // namespace flashffn
