// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flashffn {

using NeuronIndex = std::uint32_t;

/// Sorted, duplicate-free list of neuron indices.
using IndexSet = std::vector<NeuronIndex>;

enum class ErrorKind {
  kUsage,
  kIo,
  kCorrupt,
  kInvariant,
  kDimension,
  kCapacity,
  kData,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

bool is_index_set(std::span<const NeuronIndex> indices);

/// Sorts and deduplicates in place, returning the result.
IndexSet make_index_set(std::vector<NeuronIndex> indices);

IndexSet set_union(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b);
IndexSet set_difference(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b);
IndexSet set_intersection(std::span<const NeuronIndex> a, std::span<const NeuronIndex> b);

/// Union of a run of index sets.
IndexSet union_of(std::span<const IndexSet> sets);

}  // namespace flashffn
