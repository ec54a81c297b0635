// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "langfield/image.hpp"

namespace langfield {

/// 8-bit (1 or 3 channels) or 16-bit (1 channel) PNG encoding.
std::vector<std::uint8_t> encode_png(const Image<std::uint8_t>& image);
std::vector<std::uint8_t> encode_png(const Image<std::uint16_t>& image);

/// Palette PNG; label -1 is written as index 255.
std::vector<std::uint8_t> encode_label_png(const LabelImage& labels);

/// Decodes any 8/16-bit gray, palette, or RGB(A) PNG; 16-bit samples are returned as-is,
/// palette images as indices.
struct DecodedPng {
  Image<std::uint16_t> pixels;
  int bit_depth = 8;
  bool palette = false;
};
DecodedPng decode_png(const std::vector<std::uint8_t>& bytes);

/// Label map from a palette or grayscale PNG; index 255 reads back as -1.
LabelImage read_label_png(const std::filesystem::path& path);

/// RGB image in [0, 1] from an 8- or 16-bit PNG (grayscale is replicated).
Image<float> read_rgb_png(const std::filesystem::path& path);

template <typename Real>
Image<std::uint8_t> to_u8(const Image<Real>& image);
template <typename Real>
Image<std::uint16_t> to_u16(const Image<Real>& image);

}  // namespace langfield
