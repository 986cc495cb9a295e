// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "flashffn/common.hpp"

namespace flashffn {

/// Per-token, per-layer active neuron sets.
struct ActivationTrace {
  std::uint32_t n_layers = 0;
  std::uint32_t d_ffn = 0;
  std::vector<std::vector<IndexSet>> tokens;  // [token][layer]
  std::string provenance;

  std::size_t size() const { return tokens.size(); }
  /// The sequence of sets one layer saw, in token order.
  std::vector<IndexSet> layer_sets(std::uint32_t layer) const;
  void append(std::vector<IndexSet> per_layer);
  void validate() const;
};

// JSONL: a header line
//   {"schema":"flashffn.trace/1","n_layers":L,"d_ffn":N,"provenance":"..."}
// then one line per token
//   {"t":0,"layers":[[i,j,...],...]}
void write_trace_jsonl(std::ostream& out, const ActivationTrace& trace);
void write_trace_jsonl(const std::filesystem::path& path, const ActivationTrace& trace);
ActivationTrace read_trace_jsonl(std::istream& in);
ActivationTrace read_trace_jsonl(const std::filesystem::path& path);

}  // namespace flashffn
