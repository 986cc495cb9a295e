// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk bundled FFN weight store.
//
// Every neuron of every layer is one fixed-stride record holding the neuron's
// up-projection column, its down-projection row and its up-projection bias,
// so a single contiguous read brings in everything the DRAM cache needs.
//
// File layout (all integers little-endian):
//
//   offset 0   magic "FNSB"
//          4   version           u32
//          8   d_model           u32
//         12   d_ffn             u32
//         16   n_layers          u32
//         20   scalar_width      u32   (4 = f32, 2 = f16)
//         24   record_alignment  u32
//         28   record_stride     u64
//         36   layer_offsets     n_layers x u64
//   layer_offsets[l] + i * record_stride:
//              up[d_model] down[d_model] bias  (IEEE-754 LE), zero padded

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flashffn/common.hpp"

namespace flashffn {

inline constexpr std::array<char, 4> kStoreMagic{'F', 'N', 'S', 'B'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint32_t kDefaultRecordAlignment = 4096;
inline constexpr std::size_t kStoreHeaderBytes = 36;

/// Dense FFN weights of one layer, neuron-major.
struct LayerWeights {
  std::size_t d_model = 0;
  std::size_t d_ffn = 0;
  std::vector<float> up;    // d_ffn x d_model; row i is the column feeding neuron i
  std::vector<float> down;  // d_ffn x d_model; row i is what neuron i emits
  std::vector<float> bias;  // d_ffn

  LayerWeights() = default;
  LayerWeights(std::size_t d_model, std::size_t d_ffn);

  std::span<const float> up_row(NeuronIndex i) const {
    return {up.data() + static_cast<std::size_t>(i) * d_model, d_model};
  }
  std::span<const float> down_row(NeuronIndex i) const {
    return {down.data() + static_cast<std::size_t>(i) * d_model, d_model};
  }
  bool operator==(const LayerWeights&) const = default;
};

struct BundledRecord {
  NeuronIndex neuron_index = 0;
  std::vector<float> up_column;
  std::vector<float> down_row;
  float bias = 0.0f;

  bool operator==(const BundledRecord&) const = default;
};

struct StoreManifest {
  std::uint32_t version = kStoreVersion;
  std::uint32_t d_model = 0;
  std::uint32_t d_ffn = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t scalar_width = 4;
  std::uint32_t record_alignment = kDefaultRecordAlignment;
  std::uint64_t record_stride = 0;
  std::vector<std::uint64_t> layer_offsets;

  /// Bytes of meaningful data in one record: (2 d_model + 1) scalars.
  std::uint64_t payload_bytes() const {
    return (2ull * d_model + 1ull) * scalar_width;
  }
  std::uint64_t header_bytes() const { return kStoreHeaderBytes + 8ull * n_layers; }
  std::uint64_t record_offset(std::uint32_t layer, NeuronIndex neuron) const {
    return layer_offsets[layer] + static_cast<std::uint64_t>(neuron) * record_stride;
  }
  /// Offset one past the last record.
  std::uint64_t file_bytes() const;

  /// Throws Error(kInvariant, "invariant violation: ...") on any broken layout rule.
  void validate() const;

  bool operator==(const StoreManifest&) const = default;
};

struct PackOptions {
  std::uint32_t scalar_width = 4;
  std::uint32_t record_alignment = kDefaultRecordAlignment;
};

StoreManifest make_manifest(std::uint32_t d_model, std::uint32_t d_ffn, std::uint32_t n_layers,
                            const PackOptions& options = {});

std::vector<std::byte> encode_manifest(const StoreManifest& manifest);
StoreManifest decode_manifest(std::span<const std::byte> bytes);

/// Serialises one record into `out`, which must hold record_stride bytes.
void encode_record(const StoreManifest& manifest, std::span<const float> up,
                   std::span<const float> down, float bias, std::span<std::byte> out);
BundledRecord decode_record(const StoreManifest& manifest, NeuronIndex neuron,
                            std::span<const std::byte> bytes);

StoreManifest pack_store(const std::filesystem::path& path, std::span<const LayerWeights> layers,
                         const PackOptions& options = {});
StoreManifest read_manifest(const std::filesystem::path& path);

/// Reads the whole store sequentially and rebuilds the dense layers.
std::vector<LayerWeights> unpack_store(const std::filesystem::path& path);

// Raw per-layer dump used by the `pack` subcommand:
//   meta.json              {"d_model":..,"d_ffn":..,"n_layers":..}
//   layer_<l>_up.f32       d_ffn x d_model row-major little-endian f32
//   layer_<l>_down.f32     d_ffn x d_model row-major little-endian f32
//   layer_<l>_bias.f32     d_ffn little-endian f32
void write_raw_layers(const std::filesystem::path& dir, std::span<const LayerWeights> layers);
std::vector<LayerWeights> read_raw_layers(const std::filesystem::path& dir);

std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

}  // namespace flashffn
