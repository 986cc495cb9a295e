// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include "flashffn/weight_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "byte_io.hpp"

namespace flashffn {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::uint64_t align_up(std::uint64_t v, std::uint64_t alignment) {
  return (v + alignment - 1) / alignment * alignment;
}

[[noreturn]] void invariant(const std::string& what) {
  fail(ErrorKind::kInvariant, "invariant violation: " + what);
}

void put_scalar(std::byte* dst, float v, std::uint32_t width) {
  if (width == 4) {
    detail::store_f32(dst, v);
  } else {
    detail::store_le(dst, float_to_half(v));
  }
}

float get_scalar(const std::byte* src, std::uint32_t width) {
  return width == 4 ? detail::load_f32(src) : half_to_float(detail::load_le<std::uint16_t>(src));
}

}  // namespace

LayerWeights::LayerWeights(std::size_t d_model_, std::size_t d_ffn_)
    : d_model(d_model_),
      d_ffn(d_ffn_),
      up(d_model_ * d_ffn_, 0.0f),
      down(d_model_ * d_ffn_, 0.0f),
      bias(d_ffn_, 0.0f) {}

std::uint64_t StoreManifest::file_bytes() const {
  if (layer_offsets.empty()) return header_bytes();
  return layer_offsets.back() + static_cast<std::uint64_t>(d_ffn) * record_stride;
}

void StoreManifest::validate() const {
  if (version != kStoreVersion) invariant("unsupported version");
  if (d_model == 0 || d_ffn == 0 || n_layers == 0) invariant("zero dimension");
  if (scalar_width != 4 && scalar_width != 2) invariant("scalar_width must be 4 or 2");
  if (!is_power_of_two(record_alignment)) invariant("record_alignment not a power of two");
  if (record_stride < payload_bytes()) invariant("record_stride smaller than record payload");
  if (record_stride % record_alignment != 0) invariant("record_stride not a multiple of record_alignment");
  if (layer_offsets.size() != n_layers) invariant("layer table size differs from n_layers");
  if (layer_offsets.front() < header_bytes()) invariant("first layer overlaps header");
  for (std::size_t l = 0; l < layer_offsets.size(); ++l) {
    if (layer_offsets[l] % record_alignment != 0) invariant("layer offset misaligned");
    if (l + 1 < layer_offsets.size() &&
        (layer_offsets[l + 1] <= layer_offsets[l] ||
         layer_offsets[l + 1] - layer_offsets[l] < static_cast<std::uint64_t>(d_ffn) * record_stride)) {
      invariant("layer offsets overlap");
    }
  }
}

StoreManifest make_manifest(std::uint32_t d_model, std::uint32_t d_ffn, std::uint32_t n_layers,
                            const PackOptions& options) {
  if (options.scalar_width != 4 && options.scalar_width != 2) {
    fail(ErrorKind::kUsage, "scalar width must be 4 or 2");
  }
  if (!is_power_of_two(options.record_alignment) || options.record_alignment < options.scalar_width) {
    fail(ErrorKind::kUsage, "alignment must be a power of two >= scalar width");
  }
  StoreManifest m;
  m.d_model = d_model;
  m.d_ffn = d_ffn;
  m.n_layers = n_layers;
  m.scalar_width = options.scalar_width;
  m.record_alignment = options.record_alignment;
  m.record_stride = align_up(m.payload_bytes(), m.record_alignment);
  const std::uint64_t first = align_up(m.header_bytes(), m.record_alignment);
  const std::uint64_t layer_bytes = static_cast<std::uint64_t>(d_ffn) * m.record_stride;
  for (std::uint32_t l = 0; l < n_layers; ++l) m.layer_offsets.push_back(first + l * layer_bytes);
  m.validate();
  return m;
}

std::vector<std::byte> encode_manifest(const StoreManifest& m) {
  ByteWriter w;
  for (char c : kStoreMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(m.version);
  w.put(m.d_model);
  w.put(m.d_ffn);
  w.put(m.n_layers);
  w.put(m.scalar_width);
  w.put(m.record_alignment);
  w.put(m.record_stride);
  for (auto off : m.layer_offsets) w.put(off);
  return std::move(w.buffer());
}

StoreManifest decode_manifest(std::span<const std::byte> bytes) {
  ByteReader r(bytes, ErrorKind::kCorrupt, "corrupt manifest: truncated header");
  auto magic = r.take(4);
  for (std::size_t i = 0; i < 4; ++i) {
    if (static_cast<char>(magic[i]) != kStoreMagic[i]) fail(ErrorKind::kCorrupt, "corrupt manifest: bad magic");
  }
  StoreManifest m;
  m.version = r.get<std::uint32_t>();
  if (m.version != kStoreVersion) {
    fail(ErrorKind::kCorrupt, "corrupt manifest: version mismatch (found " + std::to_string(m.version) + ")");
  }
  m.d_model = r.get<std::uint32_t>();
  m.d_ffn = r.get<std::uint32_t>();
  m.n_layers = r.get<std::uint32_t>();
  m.scalar_width = r.get<std::uint32_t>();
  m.record_alignment = r.get<std::uint32_t>();
  m.record_stride = r.get<std::uint64_t>();
  if (m.n_layers == 0 || m.n_layers > (1u << 20)) fail(ErrorKind::kCorrupt, "corrupt manifest: implausible n_layers");
  m.layer_offsets.resize(m.n_layers);
  for (auto& off : m.layer_offsets) off = r.get<std::uint64_t>();
  m.validate();
  return m;
}

void encode_record(const StoreManifest& m, std::span<const float> up, std::span<const float> down,
                   float bias, std::span<std::byte> out) {
  if (up.size() != m.d_model || down.size() != m.d_model) fail(ErrorKind::kDimension, "record width differs from d_model");
  if (out.size() < m.record_stride) fail(ErrorKind::kDimension, "record buffer smaller than stride");
  std::memset(out.data(), 0, m.record_stride);
  const auto w = m.scalar_width;
  std::byte* p = out.data();
  for (float v : up) { put_scalar(p, v, w); p += w; }
  for (float v : down) { put_scalar(p, v, w); p += w; }
  put_scalar(p, bias, w);
}

BundledRecord decode_record(const StoreManifest& m, NeuronIndex neuron, std::span<const std::byte> bytes) {
  if (bytes.size() < m.payload_bytes()) fail(ErrorKind::kIo, "short read: record truncated");
  BundledRecord rec;
  rec.neuron_index = neuron;
  rec.up_column.resize(m.d_model);
  rec.down_row.resize(m.d_model);
  const auto w = m.scalar_width;
  const std::byte* p = bytes.data();
  for (auto& v : rec.up_column) { v = get_scalar(p, w); p += w; }
  for (auto& v : rec.down_row) { v = get_scalar(p, w); p += w; }
  rec.bias = get_scalar(p, w);
  return rec;
}

StoreManifest pack_store(const std::filesystem::path& path, std::span<const LayerWeights> layers,
                         const PackOptions& options) {
  if (layers.empty()) fail(ErrorKind::kDimension, "no layers to pack");
  const auto d_model = layers.front().d_model;
  const auto d_ffn = layers.front().d_ffn;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.d_model != d_model || L.d_ffn != d_ffn || L.up.size() != d_model * d_ffn ||
        L.down.size() != d_model * d_ffn || L.bias.size() != d_ffn) {
      fail(ErrorKind::kDimension, "dimension mismatch in layer " + std::to_string(l));
    }
  }
  const auto m = make_manifest(static_cast<std::uint32_t>(d_model), static_cast<std::uint32_t>(d_ffn),
                               static_cast<std::uint32_t>(layers.size()), options);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "write failure: cannot create " + path.string());
  auto header = encode_manifest(m);
  header.resize(m.layer_offsets.front(), std::byte{0});
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));

  std::vector<std::byte> layer_buf(static_cast<std::size_t>(d_ffn * m.record_stride));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    for (NeuronIndex i = 0; i < d_ffn; ++i) {
      encode_record(m, L.up_row(i), L.down_row(i), L.bias[i],
                    std::span(layer_buf).subspan(static_cast<std::size_t>(i * m.record_stride), m.record_stride));
    }
    // Layers are laid out back to back, so the stream position already matches layer_offsets[l].
    out.write(reinterpret_cast<const char*>(layer_buf.data()), static_cast<std::streamsize>(layer_buf.size()));
  }
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failure on " + path.string());
  return m;
}

StoreManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open store " + path.string());
  std::vector<std::byte> head(kStoreHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() >= 20) {
    // n_layers sits at offset 16; pull in the layer table too.
    const auto n_layers = detail::load_le<std::uint32_t>(head.data() + 16);
    if (n_layers <= (1u << 20) && head.size() == kStoreHeaderBytes) {
      std::vector<std::byte> table(8ull * n_layers);
      in.read(reinterpret_cast<char*>(table.data()), static_cast<std::streamsize>(table.size()));
      table.resize(static_cast<std::size_t>(in.gcount()));
      head.insert(head.end(), table.begin(), table.end());
    }
  }
  auto m = decode_manifest(head);
  const auto size = std::filesystem::file_size(path);
  if (size < m.file_bytes()) fail(ErrorKind::kCorrupt, "corrupt manifest: file shorter than its record table");
  return m;
}

std::vector<LayerWeights> unpack_store(const std::filesystem::path& path) {
  const auto m = read_manifest(path);
  const auto data = detail::read_file(path);
  std::vector<LayerWeights> layers;
  layers.reserve(m.n_layers);
  for (std::uint32_t l = 0; l < m.n_layers; ++l) {
    LayerWeights L(m.d_model, m.d_ffn);
    for (NeuronIndex i = 0; i < m.d_ffn; ++i) {
      const auto off = static_cast<std::size_t>(m.record_offset(l, i));
      auto rec = decode_record(m, i, std::span(data).subspan(off, m.record_stride));
      std::copy(rec.up_column.begin(), rec.up_column.end(), L.up.begin() + static_cast<std::ptrdiff_t>(i * L.d_model));
      std::copy(rec.down_row.begin(), rec.down_row.end(), L.down.begin() + static_cast<std::ptrdiff_t>(i * L.d_model));
      L.bias[i] = rec.bias;
    }
    layers.push_back(std::move(L));
  }
  return layers;
}

namespace {

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<std::byte> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) detail::store_f32(buf.data() + 4 * i, values[i]);
  detail::write_file(path, buf);
}

std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected) {
  const auto buf = detail::read_file(path);
  if (buf.size() != expected * 4) {
    fail(ErrorKind::kDimension, "dimension mismatch: " + path.string() + " holds " +
                                    std::to_string(buf.size()) + " bytes, expected " + std::to_string(expected * 4));
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) out[i] = detail::load_f32(buf.data() + 4 * i);
  return out;
}

std::filesystem::path raw_name(const std::filesystem::path& dir, std::size_t l, const char* part) {
  return dir / ("layer_" + std::to_string(l) + "_" + part + ".f32");
}

}  // namespace

void write_raw_layers(const std::filesystem::path& dir, std::span<const LayerWeights> layers) {
  if (layers.empty()) fail(ErrorKind::kDimension, "no layers");
  std::filesystem::create_directories(dir);
  nlohmann::json meta{{"d_model", layers.front().d_model},
                      {"d_ffn", layers.front().d_ffn},
                      {"n_layers", layers.size()}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    write_f32_file(raw_name(dir, l, "up"), layers[l].up);
    write_f32_file(raw_name(dir, l, "down"), layers[l].down);
    write_f32_file(raw_name(dir, l, "bias"), layers[l].bias);
  }
}

std::vector<LayerWeights> read_raw_layers(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) fail(ErrorKind::kIo, "cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("meta.json: ") + e.what());
  }
  const auto d_model = meta.at("d_model").get<std::size_t>();
  const auto d_ffn = meta.at("d_ffn").get<std::size_t>();
  const auto n_layers = meta.at("n_layers").get<std::size_t>();
  std::vector<LayerWeights> layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerWeights L;
    L.d_model = d_model;
    L.d_ffn = d_ffn;
    L.up = read_f32_file(raw_name(dir, l, "up"), d_model * d_ffn);
    L.down = read_f32_file(raw_name(dir, l, "down"), d_model * d_ffn);
    L.bias = read_f32_file(raw_name(dir, l, "bias"), d_ffn);
    layers.push_back(std::move(L));
  }
  return layers;
}

// Round-to-nearest-even narrowing.
std::uint16_t float_to_half(float value) {
  const auto u = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (u >> 16) & 0x8000u;
  const std::uint32_t exp = (u >> 23) & 0xffu;
  std::uint32_t mant = u & 0x7fffffu;
  if (exp == 0xff) return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
    return static_cast<std::uint16_t>(sign | half_mant);
  }
  std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t bits) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(bits) & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1fu;
  const std::uint32_t mant = bits & 0x3ffu;
  if (exp == 0) {
    const float mag = std::ldexp(static_cast<float>(mant), -24);
    return sign ? -mag : mag;
  }
  if (exp == 0x1f) return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

}  // namespace flashffn
