// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "flashffn/analysis.hpp"
#include "flashffn/synthetic.hpp"
#include "test_util.hpp"

using namespace flashffn;

namespace {

void check_friend_lists(const CoactivationStats& st) {
  for (NeuronIndex i = 0; i < st.d_ffn; ++i) {
    const auto& f = st.friends[i];
    CHECK(f.size() == std::min<std::size_t>(kFriendListLength, st.d_ffn - 1));
    for (std::size_t r = 0; r + 1 < f.size(); ++r) {
      const double a = st.probability(i, f[r]), b = st.probability(i, f[r + 1]);
      CHECK(a >= b);
      if (a == b) CHECK(f[r] < f[r + 1]);
    }
    // argmax over j != i, lowest index on ties
    NeuronIndex best = i == 0 ? 1 : 0;
    for (NeuronIndex j = 0; j < st.d_ffn; ++j) {
      if (j != i && st.probability(i, j) > st.probability(i, best)) best = j;
    }
    CHECK(st.closest_friend(i) == best);
  }
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("serial and parallel joint counts agree and are symmetric") {
  const auto trace = synth::zipf_correlated_trace({150, 1, {96, 12, 0.8, 2, 5, 1.1}, 2});
  const auto sets = trace.layer_sets(0);
  const auto a = coactivation_counts_serial(sets, 96);
  const auto b = coactivation_counts_parallel(sets, 96);
  CHECK(a == b);
  for (std::size_t i = 0; i < 96; ++i)
    for (std::size_t j = 0; j < 96; ++j) CHECK(a[i * 96 + j] == a[j * 96 + i]);
  const auto st = coactivation_matrix(trace, 0);
  for (NeuronIndex i = 0; i < 96; ++i) {
    std::uint32_t fired = 0;
    for (const auto& s : sets) fired += std::binary_search(s.begin(), s.end(), i);
    CHECK(st.activity[i] == fired);
  }
  check_friend_lists(st);
}

TEST_CASE("neurons that always fire together are each other's closest friend") {
  const auto trace = synth::paired_clique_trace(200, 32, 0.3, 3);
  const auto st = coactivation_matrix(trace, 0);
  for (NeuronIndex i = 0; i < 32; ++i) {
    if (st.activity[i] == 0) continue;
    const NeuronIndex partner = i ^ 1u;
    CHECK(st.closest_friend(i) == partner);
    CHECK(st.probability(i, partner) == 1.0);
  }
}

TEST_CASE("independent neurons co-fire at the base rate") {
  const double p = 0.2;
  const std::uint32_t n = 2000, d = 48;
  const auto trace = synth::independent_trace(n, d, p, 4);
  const auto st = coactivation_matrix(trace, 0);
  std::size_t pairs = 0, outside = 0;
  for (NeuronIndex i = 0; i < d; ++i) {
    const double sigma = std::sqrt(p * (1 - p) / st.activity[i]);
    for (NeuronIndex j = 0; j < d; ++j) {
      if (i == j) continue;
      ++pairs;
      outside += std::fabs(st.probability(i, j) - p) > 3 * sigma;
    }
  }
  MESSAGE(outside << " of " << pairs << " pairs outside the 3-sigma band");
  CHECK(static_cast<double>(outside) / static_cast<double>(pairs) < 0.01);
}

TEST_CASE("planted cliques are recovered as friends") {
  const std::uint32_t clique = 4;
  const auto trace = synth::planted_clique_trace(400, 64, clique, 0.15, 0.02, 5);
  const auto st = coactivation_matrix(trace, 0);
  for (NeuronIndex i = 0; i < 64; ++i) {
    const NeuronIndex base = i / clique * clique;
    std::vector<NeuronIndex> mates;
    for (NeuronIndex j = base; j < base + clique; ++j)
      if (j != i) mates.push_back(j);
    std::vector<NeuronIndex> top(st.friends[i].begin(), st.friends[i].begin() + clique - 1);
    std::sort(top.begin(), top.end());
    CHECK(top == mates);
  }
}

TEST_CASE("union normalisation") {
  const auto trace = synth::independent_trace(300, 16, 0.3, 6);
  const auto anchor = coactivation_matrix(trace, 0, CoactivationNorm::kAnchor);
  const auto uni = coactivation_matrix(trace, 0, CoactivationNorm::kUnion);
  for (NeuronIndex i = 0; i < 16; ++i) {
    for (NeuronIndex j = 0; j < 16; ++j) {
      const double co = anchor.count(i, j);
      CHECK(uni.probability(i, j) == doctest::Approx(co / (anchor.activity[i] + anchor.activity[j] - co)));
      CHECK(uni.probability(i, j) == doctest::Approx(uni.probability(j, i)));
      CHECK(anchor.probability(i, j) == doctest::Approx(co / anchor.activity[i]));
    }
  }
  check_friend_lists(uni);
  CHECK(parse_coactivation_norm("union") == CoactivationNorm::kUnion);
  CHECK_THROWS_AS(parse_coactivation_norm("jaccard"), Error);
}

TEST_CASE("friend probabilities and reported distribution statistics") {
  const auto trace = synth::zipf_correlated_trace({200, 1, {128, 16, 0.8, 2, 6, 1.1}, 7});
  const auto st = coactivation_matrix(trace, 0);
  const auto p1 = st.friend_probabilities(1), p4 = st.friend_probabilities(4), p8 = st.friend_probabilities(8);
  for (NeuronIndex i = 0; i < 128; ++i) {
    if (st.activity[i] == 0) {
      CHECK(std::isnan(p1[i]));
      continue;
    }
    CHECK(p1[i] >= p4[i]);
    CHECK(p4[i] >= p8[i]);
  }
  CHECK_THROWS_AS(st.friend_probabilities(0), Error);
  CHECK_THROWS_AS(st.friend_probabilities(9), Error);
  const auto h = st.activity_histogram();
  CHECK(std::accumulate(h.begin(), h.end(), std::uint64_t{0}) == 128);
  MESSAGE("mean log-log slope " << st.power_law_slope());
  CHECK(st.power_law_slope() <= 0.0);
}

TEST_CASE("bundling cost ledger balances exactly") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto trace = synth::zipf_correlated_trace({120, 2, {80, 10, 0.7, 2, 5, 1.1}, seed});
    for (std::uint32_t l = 0; l < 2; ++l) {
      const auto st = coactivation_matrix(trace, l);
      const auto c = closest_friend_bundling_cost(trace, l, st, 4096);
      CHECK(c.bundled_bytes == c.baseline_bytes + c.repeat_bytes + c.unneeded_bytes);
      std::uint64_t predicted = 0;
      for (const auto& s : trace.layer_sets(l)) predicted += s.size();
      CHECK(c.baseline_bytes == predicted * 4096);
      CHECK(c.baseline_reads == predicted);
      CHECK(c.bundled_reads <= c.baseline_reads);
      CHECK(c.redundancy == doctest::Approx(double(c.bundled_bytes) / double(c.baseline_bytes)));
    }
  }
}

TEST_CASE("paired cliques bundle without waste") {
  const auto trace = synth::paired_clique_trace(300, 64, 0.2, 8);
  const auto st = coactivation_matrix(trace, 0);
  const auto c = closest_friend_bundling_cost(trace, 0, st, 4096);
  CHECK(c.redundancy <= 1.0);
  CHECK(c.bundled_reads * 2 == c.baseline_reads);
}

TEST_CASE("a hub befriended by everyone makes bundling load more") {
  const auto trace = synth::hub_trace(300, 64, 0.1, 9);
  const auto st = coactivation_matrix(trace, 0);
  std::size_t befriend_hub = 0;
  for (NeuronIndex i = 1; i < 64; ++i) befriend_hub += st.closest_friend(i) == 0;
  CHECK(befriend_hub > 50);
  const auto c = closest_friend_bundling_cost(trace, 0, st, 4096);
  MESSAGE("hub redundancy " << c.redundancy);
  CHECK(c.redundancy > 1.0);
  CHECK(c.repeat_bytes > 0);
}

TEST_CASE("empty predicted sets cost nothing") {
  ActivationTrace t;
  t.n_layers = 1;
  t.d_ffn = 8;
  for (int i = 0; i < 5; ++i) t.append({IndexSet{}});
  const auto st = coactivation_matrix(t, 0);
  const auto c = closest_friend_bundling_cost(t, 0, st, 4096);
  CHECK(c.baseline_bytes == 0);
  CHECK(c.bundled_bytes == 0);
  CHECK(c.redundancy == 0.0);
  ActivationTrace shorter = t;
  shorter.tokens.pop_back();
  CHECK_THROWS_AS(closest_friend_bundling_cost(shorter, 0, st, 4096), Error);
  CHECK_THROWS_AS(coactivation_matrix(ActivationTrace{1, 8, {}, ""}, 0), Error);
}

TEST_CASE("dense trace is fully active") {
  ActivationTrace t;
  t.n_layers = 2;
  t.d_ffn = 10;
  IndexSet all(10);
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < 4; ++i) t.append({all, all});
  const auto r = sparsity_report({&t, nullptr, nullptr});
  for (const auto& row : r.active)
    for (double v : row) CHECK(v == 1.0);
}

TEST_CASE("sparsity fractions equal a direct recount, cached rows cover the active set") {
  const auto trace = synth::zipf_correlated_trace({60, 3, {120, 14, 0.8, 2, 5, 1.1}, 10});
  for (std::uint32_t k : {1u, 2u, 4u}) {
    const auto cached = windowed_union_sizes(trace, k);
    const auto r = sparsity_report({&trace, &trace, &cached});
    for (std::size_t t = 0; t < trace.size(); ++t) {
      for (std::uint32_t l = 0; l < 3; ++l) {
        CHECK(r.active[t][l] == static_cast<double>(trace.tokens[t][l].size()) / 120.0);
        CHECK(r.predicted[t][l] == r.active[t][l]);
        CHECK(r.cached[t][l] >= r.active[t][l]);
      }
    }
    if (k == 1) CHECK(r.cached == r.active);
  }
  CHECK_THROWS_AS(windowed_union_sizes(trace, 0), Error);
  CHECK_THROWS_AS(sparsity_report({}), Error);
}

TEST_CASE("sparsity CSV and JSON schemas") {
  const auto trace = synth::zipf_correlated_trace({5, 2, {40, 6, 0.8, 1, 2, 1.1}, 11});
  const auto cached = windowed_union_sizes(trace, 2);
  const auto r = sparsity_report({&trace, nullptr, &cached});
  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "token,layer,active_fraction,predicted_fraction,cached_fraction");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 5 * 2);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("schema") == "flashffn.sparsity/1");
  CHECK(j.at("active_fraction_mean").size() == 2);
  CHECK(j.at("predicted_fraction_mean").is_null());
  CHECK(j.at("cached_fraction_mean").size() == 2);
  CHECK(j.at("tokens") == 5);
}

TEST_CASE("analytics are pure functions of the trace") {
  const auto trace = synth::zipf_correlated_trace({80, 1, {64, 10, 0.8, 2, 4, 1.1}, 12});
  const auto a = coactivation_matrix(trace, 0);
  const auto b = coactivation_matrix(trace, 0);
  CHECK(a.joint == b.joint);
  CHECK(a.friends == b.friends);
  const auto ca = closest_friend_bundling_cost(trace, 0, a, 100);
  const auto cb = closest_friend_bundling_cost(trace, 0, b, 100);
  CHECK(ca.bundled_bytes == cb.bundled_bytes);
}

TEST_CASE("trace JSONL round trip") {
  const auto trace = synth::zipf_correlated_trace({20, 2, {50, 8, 0.8, 2, 3, 1.1}, 13});
  std::stringstream s;
  write_trace_jsonl(s, trace);
  const auto back = read_trace_jsonl(s);
  CHECK(back.tokens == trace.tokens);
  CHECK(back.n_layers == trace.n_layers);
  CHECK(back.d_ffn == trace.d_ffn);
  std::stringstream bad("{\"t\":0,\"layers\":[[1]]}\n");
  CHECK_THROWS_AS(read_trace_jsonl(bad), Error);
  std::stringstream out_of_range(
      "{\"schema\":\"flashffn.trace/1\",\"n_layers\":1,\"d_ffn\":4,\"provenance\":\"\"}\n{\"t\":0,\"layers\":[[7]]}\n");
  CHECK_THROWS_AS(read_trace_jsonl(out_of_range), Error);
}

}  // TEST_SUITE
