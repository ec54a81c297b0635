// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace langfield {

/// Interleaved (height, width, channels) image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  [[nodiscard]] std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(channels);
  }
  T& at(int x, int y, int c = 0) { return data[offset(x, y) + static_cast<std::size_t>(c)]; }
  const T& at(int x, int y, int c = 0) const { return data[offset(x, y) + static_cast<std::size_t>(c)]; }

  std::span<T> pixel(int x, int y) { return {data.data() + offset(x, y), static_cast<std::size_t>(channels)}; }
  std::span<const T> pixel(int x, int y) const {
    return {data.data() + offset(x, y), static_cast<std::size_t>(channels)};
  }
  std::span<const T> pixel(std::size_t index) const {
    return {data.data() + index * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
  }

  /// Copies channel `c` into a single-channel image.
  [[nodiscard]] Image<T> channel(int c) const {
    Image<T> out(width, height, 1);
    for (std::size_t i = 0; i < pixel_count(); ++i) {
      out.data[i] = data[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)];
    }
    return out;
  }

  bool operator==(const Image&) const = default;
};

/// Integer label image; -1 marks unlabeled pixels.
using LabelImage = Image<std::int32_t>;

}  // namespace langfield
