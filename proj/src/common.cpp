// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/common.hpp"

#include <algorithm>
#include <iterator>

namespace flashffn {

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

bool is_index_set(std::span<const NeuronIndex> indices) {
  return std::adjacent_find(indices.begin(), indices.end(),
                            [](NeuronIndex a, NeuronIndex b) { return a >= b; }) == indices.end();
}

IndexSet make_index_set(std::vector<NeuronIndex> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return indices;
}

IndexSet set_union(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

IndexSet set_difference(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b) {
  IndexSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

IndexSet set_intersection(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b) {
  IndexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

IndexSet union_of(std::span<const IndexSet> sets) {
  IndexSet out;
  for (const auto& s : sets) out = set_union(out, s);
  return out;
}

}  // namespace flashffn
