// Copyright 2026 The flashffn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "flashffn/common.hpp"

namespace flashffn::detail {

template <typename T>
void store_le(std::byte* dst, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::byte>((value >> (8 * i)) & 0xffu);
  }
}

template <typename T>
T load_le(const std::byte* src) {
  static_assert(std::is_unsigned_v<T>);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(std::to_integer<std::uint8_t>(src[i])) << (8 * i);
  }
  return value;
}

inline void store_f32(std::byte* dst, float v) { store_le(dst, std::bit_cast<std::uint32_t>(v)); }
inline float load_f32(const std::byte* src) { return std::bit_cast<float>(load_le<std::uint32_t>(src)); }

/// Appends little-endian values to a growing buffer.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto at = buf_.size();
    buf_.resize(at + sizeof(T));
    store_le(buf_.data() + at, value);
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::span<const std::byte> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  std::vector<std::byte>& buffer() { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

/// Bounds-checked cursor; running past the end throws `kind` with `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, ErrorKind kind, std::string what)
      : bytes_(bytes), kind_(kind), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = load_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::span<const std::byte> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(kind_, what_);
  }
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
  ErrorKind kind_;
  std::string what_;
};

inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> data(size);
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size))) {
    fail(ErrorKind::kIo, "short read on " + path.string());
  }
  return data;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::byte> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::kIo, "write failure on " + path.string());
}

}  // namespace flashffn::detail
