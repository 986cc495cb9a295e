// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <doctest.h>

#include "flashffn/weight_store.hpp"
#include "test_util.hpp"

using namespace flashffn;
using flashffn::testing::TempDir;

namespace {

// Reference layout written from the format description alone.
class ReferenceSerializer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  void pad_to(std::size_t size) { bytes.resize(size, 0); }

  std::vector<unsigned char> bytes;
};

std::vector<unsigned char> reference_store(const std::vector<LayerWeights>& layers, std::uint32_t alignment) {
  const auto d_model = static_cast<std::uint32_t>(layers[0].d_model);
  const auto d_ffn = static_cast<std::uint32_t>(layers[0].d_ffn);
  const auto n_layers = static_cast<std::uint32_t>(layers.size());
  const std::uint64_t payload = (2ull * d_model + 1) * 4;
  const std::uint64_t stride = (payload + alignment - 1) / alignment * alignment;
  const std::uint64_t header = 36 + 8ull * n_layers;
  const std::uint64_t first = (header + alignment - 1) / alignment * alignment;

  ReferenceSerializer s;
  for (char c : {'F', 'N', 'S', 'B'}) s.bytes.push_back(static_cast<unsigned char>(c));
  s.u32(1);
  s.u32(d_model);
  s.u32(d_ffn);
  s.u32(n_layers);
  s.u32(4);
  s.u32(alignment);
  s.u64(stride);
  for (std::uint32_t l = 0; l < n_layers; ++l) s.u64(first + l * d_ffn * stride);
  s.pad_to(first);
  for (const auto& L : layers) {
    for (std::uint32_t i = 0; i < d_ffn; ++i) {
      const auto start = s.bytes.size();
      for (std::uint32_t c = 0; c < d_model; ++c) s.f32(L.up[i * d_model + c]);
      for (std::uint32_t c = 0; c < d_model; ++c) s.f32(L.down[i * d_model + c]);
      s.f32(L.bias[i]);
      s.pad_to(start + stride);
    }
  }
  return s.bytes;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void truncate_file(const std::filesystem::path& p, std::size_t size) {
  auto bytes = file_bytes(p);
  bytes.resize(size);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_SUITE("weight_store") {

TEST_CASE("32 KiB bundled payload at d_model 4096") {
  const auto m = make_manifest(4096, 8, 1);
  CHECK(2ull * m.d_model * m.scalar_width == 32768);
  CHECK(m.payload_bytes() == 32768 + 4);
  CHECK(m.record_stride >= 2ull * m.d_model * m.scalar_width);
}

TEST_CASE("1x1 identity round trip") {
  TempDir dir("ws");
  LayerWeights w(1, 1);
  w.up = {2.0f};
  w.down = {3.0f};
  w.bias = {0.0f};
  pack_store(dir / "one.fnsb", std::vector{w});
  const auto back = unpack_store(dir / "one.fnsb");
  REQUIRE(back.size() == 1);
  CHECK(back[0].up == std::vector<float>{2.0f});
  CHECK(back[0].down == std::vector<float>{3.0f});
  CHECK(back[0].bias == std::vector<float>{0.0f});
}

TEST_CASE("packed bytes equal the reference serializer") {
  TempDir dir("ws");
  const auto layers = flashffn::testing::random_layers(2, 8, 16, 5);
  pack_store(dir / "s.fnsb", layers, {4, 64});
  CHECK(file_bytes(dir / "s.fnsb") == reference_store(layers, 64));
  pack_store(dir / "t.fnsb", layers, {4, 4096});
  CHECK(file_bytes(dir / "t.fnsb") == reference_store(layers, 4096));
}

TEST_CASE("round trip is bit exact, including special values") {
  TempDir dir("ws");
  for (std::uint32_t alignment : {4u, 64u, 4096u}) {
    auto layers = flashffn::testing::random_layers(3, 5, 7, alignment);
    layers[1].up[3] = -0.0f;
    layers[2].down[0] = std::numeric_limits<float>::denorm_min();
    layers[0].bias[6] = std::numeric_limits<float>::infinity();
    pack_store(dir / "r.fnsb", layers, {4, alignment});
    const auto back = unpack_store(dir / "r.fnsb");
    REQUIRE(back.size() == layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      CHECK(bit_equal(back[l].up, layers[l].up));
      CHECK(bit_equal(back[l].down, layers[l].down));
      CHECK(bit_equal(back[l].bias, layers[l].bias));
    }
  }
}

TEST_CASE("read_manifest returns what pack_store returned") {
  TempDir dir("ws");
  const auto m = pack_store(dir / "m.fnsb", flashffn::testing::random_layers(3, 4, 9, 1), {4, 256});
  CHECK(read_manifest(dir / "m.fnsb") == m);
}

TEST_CASE("layout invariants hold for every record") {
  for (std::uint32_t d_model : {1u, 3u, 64u, 1000u}) {
    for (std::uint32_t alignment : {4u, 16u, 4096u}) {
      const auto m = make_manifest(d_model, 33, 3, {4, alignment});
      CHECK(m.record_stride >= 2ull * d_model * m.scalar_width);
      CHECK(m.record_stride >= m.payload_bytes());
      for (std::uint32_t l = 0; l < m.n_layers; ++l) {
        if (l + 1 < m.n_layers) CHECK(m.layer_offsets[l + 1] - m.layer_offsets[l] >= 33ull * m.record_stride);
        for (NeuronIndex i = 0; i < 33; ++i) CHECK(m.record_offset(l, i) % alignment == 0);
      }
    }
  }
}

TEST_CASE("manifest encoding round trips") {
  const auto m = make_manifest(12, 40, 5, {2, 512});
  CHECK(decode_manifest(encode_manifest(m)) == m);
}

TEST_CASE("truncated header is a corrupt manifest") {
  TempDir dir("ws");
  pack_store(dir / "c.fnsb", flashffn::testing::random_layers(2, 4, 4, 2), {4, 64});
  truncate_file(dir / "c.fnsb", 20);
  try {
    read_manifest(dir / "c.fnsb");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCorrupt);
    CHECK(std::string(e.what()).find("corrupt manifest") != std::string::npos);
  }
}

TEST_CASE("truncated record table is a corrupt manifest") {
  TempDir dir("ws");
  pack_store(dir / "c.fnsb", flashffn::testing::random_layers(2, 4, 4, 2), {4, 64});
  const auto size = std::filesystem::file_size(dir / "c.fnsb");
  truncate_file(dir / "c.fnsb", size - 64);
  CHECK_THROWS_WITH_AS(read_manifest(dir / "c.fnsb"), doctest::Contains("corrupt manifest"), Error);
}

TEST_CASE("bad magic and version mismatch") {
  auto bytes = encode_manifest(make_manifest(4, 4, 1, {4, 64}));
  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_WITH_AS(decode_manifest(bad), doctest::Contains("bad magic"), Error);
  bad = bytes;
  bad[4] = std::byte{9};
  CHECK_THROWS_WITH_AS(decode_manifest(bad), doctest::Contains("version mismatch"), Error);
}

TEST_CASE("record_stride below payload is an invariant violation") {
  auto m = make_manifest(8, 4, 1, {4, 4});
  m.record_stride = m.payload_bytes() - 4;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("invariant violation"), Error);
  try {
    decode_manifest(encode_manifest(m));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvariant);
  }
}

TEST_CASE("overlapping layers and misaligned offsets are rejected") {
  auto m = make_manifest(8, 4, 2, {4, 64});
  m.layer_offsets[1] = m.layer_offsets[0] + m.record_stride;
  CHECK_THROWS_AS(m.validate(), Error);
  m = make_manifest(8, 4, 2, {4, 64});
  m.layer_offsets[1] += 4;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("pack rejects bad alignment and mismatched layers") {
  TempDir dir("ws");
  const auto layers = flashffn::testing::random_layers(2, 4, 4, 3);
  CHECK_THROWS_AS(pack_store(dir / "a.fnsb", layers, {4, 48}), Error);
  CHECK_THROWS_AS(pack_store(dir / "a.fnsb", layers, {4, 2}), Error);
  auto mixed = layers;
  mixed[1] = flashffn::testing::random_layer(4, 5, 1);
  try {
    pack_store(dir / "b.fnsb", mixed);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
  CHECK_THROWS_AS(pack_store(dir / "nodir" / "x" / "c.fnsb", layers), Error);
}

TEST_CASE("half precision conversion") {
  CHECK(float_to_half(1.0f) == 0x3C00);
  CHECK(float_to_half(-2.0f) == 0xC000);
  CHECK(float_to_half(65504.0f) == 0x7BFF);
  CHECK(float_to_half(0.0f) == 0x0000);
  CHECK(half_to_float(0x3555) == doctest::Approx(0.333251953125));
  CHECK(std::isinf(half_to_float(float_to_half(1e6f))));
  for (std::uint32_t h = 0; h < 0x7C00; ++h) {
    // every finite half survives a round trip through float
    CHECK_MESSAGE(float_to_half(half_to_float(static_cast<std::uint16_t>(h))) == h, h);
  }
  for (float f : {0.1f, -3.7f, 1234.5f, 6.1e-5f}) {
    CHECK(std::fabs(half_to_float(float_to_half(f)) - f) <= std::fabs(f) * 0x1p-11f);
  }
}

TEST_CASE("2-byte store widens on load") {
  TempDir dir("ws");
  auto layers = flashffn::testing::random_layers(1, 6, 5, 9);
  pack_store(dir / "h.fnsb", layers, {2, 64});
  const auto m = read_manifest(dir / "h.fnsb");
  CHECK(m.scalar_width == 2);
  CHECK(m.payload_bytes() == (2ull * 6 + 1) * 2);
  const auto back = unpack_store(dir / "h.fnsb");
  for (std::size_t i = 0; i < layers[0].up.size(); ++i) {
    CHECK(back[0].up[i] == half_to_float(float_to_half(layers[0].up[i])));
  }
}

TEST_CASE("raw layer dump round trips") {
  TempDir dir("ws");
  const auto layers = flashffn::testing::random_layers(2, 3, 4, 8);
  write_raw_layers(dir / "raw", layers);
  CHECK(read_raw_layers(dir / "raw") == layers);
  std::filesystem::resize_file(dir / "raw" / "layer_1_up.f32", 8);
  CHECK_THROWS_AS(read_raw_layers(dir / "raw"), Error);
}

}  // TEST_SUITE
