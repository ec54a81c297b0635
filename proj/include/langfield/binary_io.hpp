// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "langfield/error.hpp"

namespace langfield {

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> values) {
    for (float v : values) f32(v);
  }
  void raw(std::string_view bytes) { bytes_.insert(bytes_.end(), bytes.begin(), bytes.end()); }

  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> release() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian scalars; throws FormatError naming `section` when data runs out.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::string_view section) { return static_cast<std::uint16_t>(get(2, section)); }
  std::uint32_t u32(std::string_view section) { return static_cast<std::uint32_t>(get(4, section)); }
  std::uint64_t u64(std::string_view section) { return get(8, section); }
  float f32(std::string_view section) { return std::bit_cast<float>(u32(section)); }
  void f32s(std::span<float> out, std::string_view section) {
    require(out.size() * 4, section);
    for (float& v : out) v = f32(section);
  }
  std::string str(std::size_t n, std::string_view section) {
    require(n, section);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void require(std::size_t n, std::string_view section) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated file: section '" + std::string(section) + "' needs " +
                        std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                        " remain");
    }
  }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
  [[nodiscard]] std::size_t position() const { return pos_; }

 private:
  std::uint64_t get(int n, std::string_view section) {
    require(static_cast<std::size_t>(n), section);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace langfield
