// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// Monte Carlo comparison of where the cache window should end during a
// speculative block.
//
// Each trial warms a cache on a correlated token stream, then drafts lambda+1
// tokens. Each draft is accepted with probability alpha until the first
// rejection, so the first A drafts follow the true stream; the rest come from
// a forked stream whose context was reset. After verification the next pass
// needs the true tokens A+1 .. A+lambda+1. Reuse is the fraction of that
// pass's neurons already resident.

#pragma once

#include <cstdint>
#include <vector>

#include "flashffn/synthetic.hpp"

namespace flashffn {

struct SpeculativeSimConfig {
  std::uint32_t lambda = 4;
  double alpha = 0.6;
  std::uint32_t window_k = 4;
  std::uint32_t trials = 100;
  std::uint32_t warmup_tokens = 8;
  synth::TopicOptions stream;
  std::uint64_t seed = 1;
};

struct SpeculativeSimReport {
  std::uint32_t anchor = 0;                 // 1-based draft the window ends on
  double anchor_reuse_mean = 0.0;
  double keep_last_reuse_mean = 0.0;        // window ends on draft lambda+1
  std::vector<double> reuse_by_anchor;      // index a-1 for anchor a
  double mean_accepted = 0.0;
};

SpeculativeSimReport simulate_speculative_reuse(const SpeculativeSimConfig& config);

}  // namespace flashffn
