// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "flashffn/neuron_cache.hpp"
#include "flashffn/speculative.hpp"
#include "flashffn/synthetic.hpp"

using namespace flashffn;

TEST_SUITE("speculative") {

TEST_CASE("anchored window reuses more than keeping every draft") {
  for (double alpha : {0.4, 0.6, 0.8}) {
    SpeculativeSimConfig c;
    c.alpha = alpha;
    c.trials = 200;
    const auto r = simulate_speculative_reuse(c);
    CHECK(r.anchor == speculative_anchor(4, alpha));
    REQUIRE(r.reuse_by_anchor.size() == 5);
    for (double v : r.reuse_by_anchor) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(r.anchor_reuse_mean == r.reuse_by_anchor[r.anchor - 1]);
    CHECK(r.keep_last_reuse_mean == r.reuse_by_anchor.back());
    MESSAGE("alpha " << alpha << ": anchor " << r.anchor_reuse_mean << " vs keep-last " << r.keep_last_reuse_mean);
    CHECK(r.anchor_reuse_mean > r.keep_last_reuse_mean);
  }
}

TEST_CASE("accepted drafts follow a first-rejection count") {
  SpeculativeSimConfig c;
  c.alpha = 0.7;
  c.trials = 600;
  const auto r = simulate_speculative_reuse(c);
  double expected = 0.0;
  for (int i = 1; i <= 5; ++i) expected += std::pow(0.7, i);
  CHECK(r.mean_accepted == doctest::Approx(expected).epsilon(0.12));
}

TEST_CASE("full acceptance anchors on the last draft") {
  SpeculativeSimConfig c;
  c.alpha = 1.0;
  c.trials = 30;
  const auto r = simulate_speculative_reuse(c);
  CHECK(r.anchor == 5);
  CHECK(r.mean_accepted == 5.0);
  CHECK(r.anchor_reuse_mean == r.keep_last_reuse_mean);
}

TEST_CASE("simulation is deterministic for a seed") {
  SpeculativeSimConfig c;
  c.trials = 20;
  const auto a = simulate_speculative_reuse(c);
  const auto b = simulate_speculative_reuse(c);
  CHECK(a.reuse_by_anchor == b.reuse_by_anchor);
  CHECK(a.mean_accepted == b.mean_accepted);
}

TEST_CASE("trace generators produce their planted structure") {
  const auto hub = synth::hub_trace(50, 20, 0.1, 1);
  for (const auto& tok : hub.tokens) CHECK(tok[0].front() == 0);
  const auto pairs = synth::paired_clique_trace(50, 20, 0.3, 2);
  for (const auto& tok : pairs.tokens) {
    for (auto n : tok[0]) CHECK(std::binary_search(tok[0].begin(), tok[0].end(), n ^ 1u));
  }
  synth::ZipfTraceOptions o;
  o.n_tokens = 40;
  o.n_layers = 2;
  const auto z1 = synth::zipf_correlated_trace(o);
  const auto z2 = synth::zipf_correlated_trace(o);
  CHECK(z1.tokens == z2.tokens);
  CHECK_NOTHROW(z1.validate());
  for (const auto& s : synth::low_rank_samples(6, 10, 2, 20, 3)) {
    CHECK(s.attention_output.size() == 6);
    CHECK(is_index_set(s.active));
  }
}

}  // TEST_SUITE
