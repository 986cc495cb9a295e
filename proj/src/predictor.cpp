// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "byte_io.hpp"

namespace flashffn {
namespace {

constexpr std::array<char, 4> kPredictorMagic{'F', 'N', 'P', 'R'};
constexpr std::uint32_t kPredictorVersion = 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_width(const PredictorParams& p, std::size_t n) {
  if (n != p.d_model) {
    fail(ErrorKind::kDimension, "dimension mismatch: attention output has " + std::to_string(n) +
                                    " entries, predictor expects " + std::to_string(p.d_model));
  }
}

template <typename T>
void low_rank_logits(std::span<const T> a, std::span<const T> b, std::uint32_t rank, std::uint32_t d_model,
                     std::uint32_t d_ffn, std::span<const float> x, std::vector<double>& hidden,
                     std::vector<double>& z) {
  hidden.assign(rank, 0.0);
  for (std::uint32_t i = 0; i < d_model; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const T* row = a.data() + static_cast<std::size_t>(i) * rank;
    for (std::uint32_t k = 0; k < rank; ++k) hidden[k] += xi * static_cast<double>(row[k]);
  }
  z.assign(d_ffn, 0.0);
  for (std::uint32_t k = 0; k < rank; ++k) {
    const double hk = hidden[k];
    const T* row = b.data() + static_cast<std::size_t>(k) * d_ffn;
    for (std::uint32_t j = 0; j < d_ffn; ++j) z[j] += hk * static_cast<double>(row[j]);
  }
}

}  // namespace

std::vector<double> PredictorParams::logits(std::span<const float> x) const {
  check_width(*this, x.size());
  std::vector<double> hidden, z;
  low_rank_logits<float>(factor_a, factor_b, rank, d_model, d_ffn, x, hidden, z);
  return z;
}

std::vector<double> PredictorParams::scores(std::span<const float> x) const {
  auto z = logits(x);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

IndexSet predict_active(const PredictorParams& params, std::span<const float> attention_output) {
  const auto s = params.scores(attention_output);
  IndexSet out;
  const double t = params.threshold;
  for (NeuronIndex j = 0; j < params.d_ffn; ++j) {
    // Sigmoid is strictly positive, so a non-positive threshold admits everything
    // even where the double rounds to zero.
    if (t <= 0.0 || s[j] > t) out.push_back(j);
  }
  return out;
}

ClassWeights balanced_class_weights(std::span<const LabeledSample> samples, std::uint32_t d_ffn,
                                    std::uint32_t layer) {
  std::uint64_t positives = 0;
  for (const auto& s : samples) positives += s.active.size();
  const std::uint64_t total = static_cast<std::uint64_t>(samples.size()) * d_ffn;
  if (positives == 0 || positives == total) {
    fail(ErrorKind::kData, "degenerate labels for layer " + std::to_string(layer) + ": " +
                               (positives == 0 ? "no positive" : "no negative") + " samples");
  }
  ClassWeights w;
  w.positive = static_cast<double>(total) / (2.0 * static_cast<double>(positives));
  w.negative = static_cast<double>(total) / (2.0 * static_cast<double>(total - positives));
  return w;
}

LossAndGradient balanced_loss(std::span<const double> factor_a, std::span<const double> factor_b,
                              std::uint32_t rank, std::uint32_t d_model, std::uint32_t d_ffn,
                              std::span<const LabeledSample> samples, ClassWeights weights, bool with_gradient) {
  LossAndGradient out;
  if (with_gradient) {
    out.grad_a.assign(factor_a.size(), 0.0);
    out.grad_b.assign(factor_b.size(), 0.0);
  }
  if (samples.empty()) return out;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * d_ffn);
  std::vector<double> hidden, z, dz(d_ffn), dh(rank);
  std::vector<char> label(d_ffn);
  for (const auto& s : samples) {
    if (s.attention_output.size() != d_model) fail(ErrorKind::kDimension, "dimension mismatch in training sample");
    low_rank_logits<double>(factor_a, factor_b, rank, d_model, d_ffn, s.attention_output, hidden, z);
    std::fill(label.begin(), label.end(), 0);
    for (auto j : s.active) label[j] = 1;
    for (std::uint32_t j = 0; j < d_ffn; ++j) {
      if (label[j]) {
        out.loss += weights.positive * softplus(-z[j]);
        dz[j] = weights.positive * (sigmoid(z[j]) - 1.0) * norm;
      } else {
        out.loss += weights.negative * softplus(z[j]);
        dz[j] = weights.negative * sigmoid(z[j]) * norm;
      }
    }
    if (!with_gradient) continue;
    // dL/dB = h^T dz ; dL/dh = B dz ; dL/dA = x dh^T
    for (std::uint32_t k = 0; k < rank; ++k) {
      double acc = 0.0;
      double* gb = out.grad_b.data() + static_cast<std::size_t>(k) * d_ffn;
      const double* bk = factor_b.data() + static_cast<std::size_t>(k) * d_ffn;
      for (std::uint32_t j = 0; j < d_ffn; ++j) {
        gb[j] += hidden[k] * dz[j];
        acc += bk[j] * dz[j];
      }
      dh[k] = acc;
    }
    for (std::uint32_t i = 0; i < d_model; ++i) {
      const double xi = s.attention_output[i];
      double* ga = out.grad_a.data() + static_cast<std::size_t>(i) * rank;
      for (std::uint32_t k = 0; k < rank; ++k) ga[k] += xi * dh[k];
    }
  }
  out.loss *= norm;
  return out;
}

PredictorParams init_predictor(std::uint32_t layer, std::uint32_t d_model, std::uint32_t d_ffn,
                               const TrainOptions& options) {
  if (options.rank == 0) fail(ErrorKind::kUsage, "predictor rank must be >= 1");
  PredictorParams p;
  p.layer = layer;
  p.rank = options.rank;
  p.d_model = d_model;
  p.d_ffn = d_ffn;
  p.threshold = options.threshold;
  std::mt19937_64 rng(options.seed ^ (0x5bd1e995ull * (layer + 1)));
  std::uniform_real_distribution<double> u(-options.init_scale, options.init_scale);
  p.factor_a.resize(static_cast<std::size_t>(d_model) * p.rank);
  p.factor_b.resize(static_cast<std::size_t>(p.rank) * d_ffn);
  for (auto& v : p.factor_a) v = static_cast<float>(u(rng));
  for (auto& v : p.factor_b) v = static_cast<float>(u(rng));
  return p;
}

PredictorParams train_predictor(std::uint32_t layer, std::uint32_t d_model, std::uint32_t d_ffn,
                                std::span<const LabeledSample> samples, const TrainOptions& options) {
  const auto weights = balanced_class_weights(samples, d_ffn, layer);
  auto params = init_predictor(layer, d_model, d_ffn, options);
  if (options.epochs == 0) return params;

  std::vector<double> a(params.factor_a.begin(), params.factor_a.end());
  std::vector<double> b(params.factor_b.begin(), params.factor_b.end());
  std::vector<double> ma(a.size(), 0.0), va(a.size(), 0.0), mb(b.size(), 0.0), vb(b.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::uint64_t step = 0;

  auto adam = [&](std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                  const std::vector<double>& g) {
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      w[i] -= options.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  };

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed + 0x1234567ull * (layer + 1));
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::vector<LabeledSample> chunk;
  for (std::uint32_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      chunk.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) chunk.push_back(samples[order[i]]);
      auto lg = balanced_loss(a, b, params.rank, d_model, d_ffn, chunk, weights, true);
      ++step;
      adam(a, ma, va, lg.grad_a);
      adam(b, mb, vb, lg.grad_b);
    }
  }
  std::transform(a.begin(), a.end(), params.factor_a.begin(), [](double v) { return static_cast<float>(v); });
  std::transform(b.begin(), b.end(), params.factor_b.begin(), [](double v) { return static_cast<float>(v); });
  return params;
}

PredictorMetrics evaluate_predictor(const PredictorParams& params, std::span<const LabeledSample> samples) {
  PredictorMetrics m;
  if (samples.empty()) fail(ErrorKind::kUsage, "evaluation needs at least one sample");
  for (const auto& s : samples) {
    const auto predicted = predict_active(params, s.attention_output);
    const auto tp = set_intersection(predicted, s.active).size();
    m.true_positive += tp;
    m.false_positive += predicted.size() - tp;
    m.false_negative += s.active.size() - tp;
    m.true_negative += params.d_ffn - predicted.size() - (s.active.size() - tp);
  }
  const double pos = static_cast<double>(m.true_positive + m.false_negative);
  const double neg = static_cast<double>(m.false_positive + m.true_negative);
  const double all = pos + neg;
  m.false_negative_rate = pos > 0 ? static_cast<double>(m.false_negative) / pos : 0.0;
  m.false_positive_rate = neg > 0 ? static_cast<double>(m.false_positive) / neg : 0.0;
  m.predicted_density = static_cast<double>(m.true_positive + m.false_positive) / all;
  m.true_density = pos / all;
  return m;
}

void write_predictors(const std::filesystem::path& path, std::span<const PredictorParams> params) {
  detail::ByteWriter w;
  for (char c : kPredictorMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kPredictorVersion);
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    if (p.factor_a.size() != static_cast<std::size_t>(p.d_model) * p.rank ||
        p.factor_b.size() != static_cast<std::size_t>(p.rank) * p.d_ffn) {
      fail(ErrorKind::kDimension, "predictor factor shape mismatch for layer " + std::to_string(p.layer));
    }
    w.put(p.layer);
    w.put(p.rank);
    w.put(p.d_model);
    w.put(p.d_ffn);
    w.put_f32(p.threshold);
    for (float v : p.factor_a) w.put_f32(v);
    for (float v : p.factor_b) w.put_f32(v);
  }
  detail::write_file(path, w.buffer());
}

std::vector<PredictorParams> read_predictors(const std::filesystem::path& path) {
  const auto data = detail::read_file(path);
  detail::ByteReader r(data, ErrorKind::kCorrupt, "corrupt predictor file: truncated");
  auto magic = r.take(4);
  for (std::size_t i = 0; i < 4; ++i) {
    if (static_cast<char>(magic[i]) != kPredictorMagic[i]) fail(ErrorKind::kCorrupt, "corrupt predictor file: bad magic");
  }
  if (r.get<std::uint32_t>() != kPredictorVersion) fail(ErrorKind::kCorrupt, "corrupt predictor file: version mismatch");
  const auto n = r.get<std::uint32_t>();
  std::vector<PredictorParams> out;
  for (std::uint32_t l = 0; l < n; ++l) {
    PredictorParams p;
    p.layer = r.get<std::uint32_t>();
    p.rank = r.get<std::uint32_t>();
    p.d_model = r.get<std::uint32_t>();
    p.d_ffn = r.get<std::uint32_t>();
    p.threshold = r.get_f32();
    const auto na = static_cast<std::size_t>(p.d_model) * p.rank;
    const auto nb = static_cast<std::size_t>(p.rank) * p.d_ffn;
    if ((na + nb) * 4 > r.remaining()) fail(ErrorKind::kCorrupt, "corrupt predictor file: truncated factors");
    p.factor_a.resize(na);
    p.factor_b.resize(nb);
    for (auto& v : p.factor_a) v = r.get_f32();
    for (auto& v : p.factor_b) v = r.get_f32();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace flashffn
