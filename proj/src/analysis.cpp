// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace flashffn {

CoactivationNorm parse_coactivation_norm(std::string_view text) {
  if (text == "anchor") return CoactivationNorm::kAnchor;
  if (text == "union") return CoactivationNorm::kUnion;
  fail(ErrorKind::kUsage, "coactivation normalisation must be anchor or union");
}

double CoactivationStats::probability(NeuronIndex i, NeuronIndex j) const {
  const double co = count(i, j);
  const double denom = norm == CoactivationNorm::kAnchor ? activity[i] : activity[i] + activity[j] - co;
  return denom > 0.0 ? co / denom : 0.0;
}

std::vector<double> CoactivationStats::friend_probabilities(std::size_t rank) const {
  if (rank == 0 || rank > kFriendListLength) fail(ErrorKind::kUsage, "friend rank must be in [1, 8]");
  std::vector<double> out(d_ffn, std::numeric_limits<double>::quiet_NaN());
  for (NeuronIndex i = 0; i < d_ffn; ++i) {
    if (activity[i] > 0 && friends[i].size() >= rank) out[i] = probability(i, friends[i][rank - 1]);
  }
  return out;
}

double CoactivationStats::power_law_slope() const {
  double sum = 0.0;
  std::size_t fitted = 0;
  std::vector<double> p;
  for (NeuronIndex i = 0; i < d_ffn; ++i) {
    if (activity[i] == 0) continue;
    p.clear();
    for (NeuronIndex j = 0; j < d_ffn; ++j) {
      if (j != i && count(i, j) > 0) p.push_back(probability(i, j));
    }
    if (p.size() < 3) continue;
    std::sort(p.begin(), p.end(), std::greater<>());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(p.size());
    for (std::size_t r = 0; r < p.size(); ++r) {
      const double x = std::log(static_cast<double>(r + 1)), y = std::log(p[r]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    if (den <= 0.0) continue;
    sum += (n * sxy - sx * sy) / den;
    ++fitted;
  }
  return fitted ? sum / static_cast<double>(fitted) : 0.0;
}

std::vector<std::uint64_t> CoactivationStats::activity_histogram() const {
  std::vector<std::uint64_t> h;
  for (auto a : activity) {
    const auto bin = static_cast<std::size_t>(std::bit_width(static_cast<std::uint64_t>(a) + 1) - 1);
    if (h.size() <= bin) h.resize(bin + 1, 0);
    ++h[bin];
  }
  return h;
}

namespace {

void check_sets(std::span<const IndexSet> sets, std::uint32_t d_ffn) {
  for (const auto& s : sets) {
    if (!is_index_set(s) || (!s.empty() && s.back() >= d_ffn)) fail(ErrorKind::kData, "trace set invalid for d_ffn");
  }
}

}  // namespace

std::vector<std::uint32_t> coactivation_counts_serial(std::span<const IndexSet> sets, std::uint32_t d_ffn) {
  check_sets(sets, d_ffn);
  std::vector<std::uint32_t> joint(static_cast<std::size_t>(d_ffn) * d_ffn, 0);
  for (const auto& s : sets) {
    for (auto a : s)
      for (auto b : s) ++joint[static_cast<std::size_t>(a) * d_ffn + b];
  }
  return joint;
}

std::vector<std::uint32_t> coactivation_counts_parallel(std::span<const IndexSet> sets, std::uint32_t d_ffn) {
  check_sets(sets, d_ffn);
  const std::size_t words = (sets.size() + 63) / 64;
  std::vector<std::uint64_t> bits(static_cast<std::size_t>(d_ffn) * words, 0);
  for (std::size_t t = 0; t < sets.size(); ++t) {
    for (auto n : sets[t]) bits[n * words + t / 64] |= 1ull << (t % 64);
  }
  std::vector<std::uint32_t> joint(static_cast<std::size_t>(d_ffn) * d_ffn, 0);
  const auto n = static_cast<std::ptrdiff_t>(d_ffn);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::uint64_t* bi = bits.data() + i * words;
    for (std::ptrdiff_t j = i; j < n; ++j) {
      const std::uint64_t* bj = bits.data() + j * words;
      std::uint32_t c = 0;
      for (std::size_t w = 0; w < words; ++w) c += static_cast<std::uint32_t>(std::popcount(bi[w] & bj[w]));
      joint[i * d_ffn + j] = c;
      joint[j * d_ffn + i] = c;
    }
  }
  return joint;
}

CoactivationStats coactivation_matrix(const ActivationTrace& trace, std::uint32_t layer, CoactivationNorm norm) {
  if (trace.size() == 0) fail(ErrorKind::kData, "empty trace");
  CoactivationStats st;
  st.d_ffn = trace.d_ffn;
  st.n_tokens = trace.size();
  st.norm = norm;
  st.joint = coactivation_counts_parallel(trace.layer_sets(layer), trace.d_ffn);
  st.activity.resize(st.d_ffn);
  for (NeuronIndex i = 0; i < st.d_ffn; ++i) st.activity[i] = st.count(i, i);

  st.friends.resize(st.d_ffn);
  std::vector<NeuronIndex> order;
  for (NeuronIndex i = 0; i < st.d_ffn; ++i) {
    order.clear();
    for (NeuronIndex j = 0; j < st.d_ffn; ++j)
      if (j != i) order.push_back(j);
    const std::size_t keep = std::min(kFriendListLength, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](NeuronIndex a, NeuronIndex b) {
                        const double pa = st.probability(i, a), pb = st.probability(i, b);
                        return pa != pb ? pa > pb : a < b;
                      });
    st.friends[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return st;
}

BundlingCost closest_friend_bundling_cost(const ActivationTrace& trace, std::uint32_t layer,
                                          const CoactivationStats& stats, std::uint64_t record_bytes) {
  if (stats.d_ffn != trace.d_ffn || stats.n_tokens != trace.size()) {
    fail(ErrorKind::kUsage, "coactivation stats were computed on a different trace");
  }
  BundlingCost cost;
  std::vector<std::uint32_t> loaded(trace.d_ffn, 0), needed(trace.d_ffn, 0);
  std::uint32_t epoch = 0;
  for (const auto& set : trace.layer_sets(layer)) {
    ++epoch;
    for (auto n : set) needed[n] = epoch;
    cost.baseline_bytes += set.size() * record_bytes;
    cost.baseline_reads += set.size();
    for (auto n : set) {
      if (loaded[n] == epoch) continue;
      ++cost.bundled_reads;
      const NeuronIndex members[2] = {n, stats.friends[n].empty() ? n : stats.closest_friend(n)};
      const std::size_t width = members[1] == n ? 1 : 2;
      for (std::size_t m = 0; m < width; ++m) {
        const auto x = members[m];
        cost.bundled_bytes += record_bytes;
        if (loaded[x] == epoch) {
          cost.repeat_bytes += record_bytes;
        } else if (needed[x] != epoch) {
          cost.unneeded_bytes += record_bytes;
        }
        loaded[x] = epoch;
      }
    }
  }
  cost.redundancy = cost.baseline_bytes ? static_cast<double>(cost.bundled_bytes) / cost.baseline_bytes : 0.0;
  return cost;
}

std::vector<std::vector<std::size_t>> windowed_union_sizes(const ActivationTrace& trace, std::uint32_t k) {
  if (k == 0) fail(ErrorKind::kUsage, "window must be >= 1");
  std::vector<std::vector<std::size_t>> out(trace.size(), std::vector<std::size_t>(trace.n_layers));
  for (std::uint32_t l = 0; l < trace.n_layers; ++l) {
    const auto sets = trace.layer_sets(l);
    for (std::size_t t = 0; t < sets.size(); ++t) {
      const std::size_t begin = t + 1 >= k ? t + 1 - k : 0;
      out[t][l] = union_of(std::span<const IndexSet>(sets).subspan(begin, t + 1 - begin)).size();
    }
  }
  return out;
}

std::vector<double> SparsityReport::layer_mean(const std::vector<std::vector<double>>& series) const {
  std::vector<double> m(n_layers, 0.0);
  if (series.empty()) return m;
  for (const auto& row : series)
    for (std::uint32_t l = 0; l < n_layers; ++l) m[l] += row[l];
  for (auto& v : m) v /= static_cast<double>(series.size());
  return m;
}

std::string SparsityReport::to_csv() const {
  std::ostringstream out;
  out.precision(8);
  out << "token,layer,active_fraction,predicted_fraction,cached_fraction\n";
  const std::size_t n = std::max({active.size(), predicted.size(), cached.size()});
  auto cell = [&](const std::vector<std::vector<double>>& s, std::size_t t, std::uint32_t l) {
    if (!s.empty()) out << s[t][l];
  };
  for (std::size_t t = 0; t < n; ++t) {
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      out << t << ',' << l << ',';
      cell(active, t, l);
      out << ',';
      cell(predicted, t, l);
      out << ',';
      cell(cached, t, l);
      out << '\n';
    }
  }
  return out.str();
}

std::string SparsityReport::to_json() const {
  nlohmann::json j{{"schema", "flashffn.sparsity/1"}, {"n_layers", n_layers}, {"d_ffn", d_ffn}};
  auto put = [&](const char* key, const std::vector<std::vector<double>>& s) {
    j[key] = s.empty() ? nlohmann::json(nullptr) : nlohmann::json(layer_mean(s));
  };
  put("active_fraction_mean", active);
  put("predicted_fraction_mean", predicted);
  put("cached_fraction_mean", cached);
  j["tokens"] = std::max({active.size(), predicted.size(), cached.size()});
  return j.dump(2);
}

SparsityReport sparsity_report(const SparsityInputs& in) {
  const ActivationTrace* shape = in.truth ? in.truth : in.predicted;
  if (!shape) fail(ErrorKind::kUsage, "sparsity report needs a trace");
  SparsityReport r;
  r.n_layers = shape->n_layers;
  r.d_ffn = shape->d_ffn;
  const double d = r.d_ffn;
  auto fractions = [&](const ActivationTrace& t) {
    if (t.size() == 0) fail(ErrorKind::kData, "empty trace");
    if (t.n_layers != r.n_layers || t.d_ffn != r.d_ffn) fail(ErrorKind::kDimension, "trace shapes differ");
    std::vector<std::vector<double>> s;
    for (const auto& tok : t.tokens) {
      std::vector<double> row;
      for (const auto& set : tok) row.push_back(static_cast<double>(set.size()) / d);
      s.push_back(std::move(row));
    }
    return s;
  };
  if (in.truth) r.active = fractions(*in.truth);
  if (in.predicted) r.predicted = fractions(*in.predicted);
  if (in.cached_rows) {
    for (const auto& tok : *in.cached_rows) {
      if (tok.size() != r.n_layers) fail(ErrorKind::kDimension, "cached-rows series has the wrong layer count");
      std::vector<double> row;
      for (auto c : tok) row.push_back(static_cast<double>(c) / d);
      r.cached.push_back(std::move(row));
    }
  }
  return r;
}

}  // namespace flashffn
