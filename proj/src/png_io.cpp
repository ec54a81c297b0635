// SPDX-License-Identifier: Apache-2.0
#include "langfield/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"

namespace langfield {
namespace {

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw FormatError(std::string("png: ") + message); }
void png_warn(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}
void no_flush(png_structp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->bytes->size() - cur->pos < length) png_error(png, "unexpected end of data");
  std::memcpy(data, cur->bytes->data() + cur->pos, length);
  cur->pos += length;
}

/// RAII holder for a libpng write struct.
class PngWriter {
 public:
  PngWriter() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png_) throw Error("png: cannot allocate writer");
    info_ = png_create_info_struct(png_);
    png_set_write_fn(png_, &out_, append_bytes, no_flush);
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  std::vector<std::uint8_t> write(int width, int height, int bit_depth, int color_type,
                                  const std::vector<png_bytep>& rows,
                                  const std::vector<png_color>* palette = nullptr) {
    png_set_IHDR(png_, info_, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (palette) png_set_PLTE(png_, info_, palette->data(), static_cast<int>(palette->size()));
    png_write_info(png_, info_);
    if (bit_depth == 16) png_set_swap(png_);  // host little-endian samples -> PNG big-endian
    png_write_image(png_, const_cast<png_bytepp>(rows.data()));
    png_write_end(png_, nullptr);
    return std::move(out_);
  }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
  std::vector<std::uint8_t> out_;
};

void check_size(int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidArgument("png: image must be non-empty");
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image<std::uint8_t>& image) {
  check_size(image.width, image.height);
  int color_type = 0;
  if (image.channels == 1) {
    color_type = PNG_COLOR_TYPE_GRAY;
  } else if (image.channels == 3) {
    color_type = PNG_COLOR_TYPE_RGB;
  } else {
    throw InvalidArgument("png: 8-bit images need 1 or 3 channels");
  }
  auto copy = image.data;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[y] = copy.data() + image.offset(0, y);
  return PngWriter().write(image.width, image.height, 8, color_type, rows);
}

std::vector<std::uint8_t> encode_png(const Image<std::uint16_t>& image) {
  check_size(image.width, image.height);
  if (image.channels != 1) throw InvalidArgument("png: 16-bit export supports grayscale only");
  auto copy = image.data;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(copy.data() + image.offset(0, y));
  }
  return PngWriter().write(image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

std::vector<std::uint8_t> encode_label_png(const LabelImage& labels) {
  check_size(labels.width, labels.height);
  std::vector<std::uint8_t> idx(labels.pixel_count());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto v = labels.data[i * labels.channels];
    if (v < -1 || v > 254) throw InvalidArgument("png: labels must lie in [-1, 254]");
    idx[i] = v < 0 ? 255 : static_cast<std::uint8_t>(v);
  }
  std::vector<png_color> palette(256);
  for (int i = 0; i < 255; ++i) {
    // Golden-angle hue walk keeps neighbouring labels distinguishable.
    const double h = std::fmod(i * 137.508, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
      case 0: r = 1; g = x; break;
      case 1: r = x; g = 1; break;
      case 2: g = 1; b = x; break;
      case 3: g = x; b = 1; break;
      case 4: r = x; b = 1; break;
      default: r = 1; b = x; break;
    }
    palette[i] = {static_cast<png_byte>(40 + 200 * r), static_cast<png_byte>(40 + 200 * g),
                  static_cast<png_byte>(40 + 200 * b)};
  }
  palette[255] = {0, 0, 0};
  std::vector<png_bytep> rows(static_cast<std::size_t>(labels.height));
  for (int y = 0; y < labels.height; ++y) rows[y] = idx.data() + static_cast<std::size_t>(y) * labels.width;
  return PngWriter().write(labels.width, labels.height, 8, PNG_COLOR_TYPE_PALETTE, rows, &palette);
}

DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("png: bad signature");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw Error("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  ReadCursor cursor{&bytes};
  png_set_read_fn(png, &cursor, read_bytes);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  DecodedPng out;
  out.palette = color_type == PNG_COLOR_TYPE_PALETTE;
  if (depth < 8) {
    if (out.palette) {
      png_set_packing(png);
    } else {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    depth = 8;
  }
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  out.bit_depth = depth;
  out.pixels = Image<std::uint16_t>(width, height, channels);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> buffer(rowbytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());

  for (int y = 0; y < height; ++y) {
    for (int i = 0; i < width * channels; ++i) {
      std::uint16_t v = 0;
      if (depth == 16) {
        std::memcpy(&v, rows[y] + 2 * i, 2);
      } else {
        v = rows[y][i];
      }
      out.pixels.data[static_cast<std::size_t>(y) * width * channels + i] = v;
    }
  }
  return out;
}

LabelImage read_label_png(const std::filesystem::path& path) {
  const auto decoded = decode_png(read_file(path));
  if (decoded.bit_depth != 8) throw FormatError(path.string() + ": label PNG must be 8-bit");
  const auto& px = decoded.pixels;
  LabelImage labels(px.width, px.height, 1);
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) {
    const auto v = px.data[i * px.channels];
    labels.data[i] = v == 255 ? -1 : static_cast<std::int32_t>(v);
  }
  return labels;
}

Image<float> read_rgb_png(const std::filesystem::path& path) {
  const auto decoded = decode_png(read_file(path));
  if (decoded.palette) throw FormatError(path.string() + ": palette PNG is not an RGB image");
  const auto& px = decoded.pixels;
  const float scale = decoded.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  Image<float> out(px.width, px.height, 3);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const int src = px.channels >= 3 ? c : 0;
      out.data[i * 3 + c] = static_cast<float>(px.data[i * px.channels + src]) * scale;
    }
  }
  return out;
}

template <typename Real>
Image<std::uint8_t> to_u8(const Image<Real>& image) {
  Image<std::uint8_t> out(image.width, image.height, image.channels);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.data[i]), 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

template <typename Real>
Image<std::uint16_t> to_u16(const Image<Real>& image) {
  Image<std::uint16_t> out(image.width, image.height, image.channels);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.data[i]), 0.0, 1.0);
    out.data[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  return out;
}

template Image<std::uint8_t> to_u8<float>(const Image<float>&);
template Image<std::uint8_t> to_u8<double>(const Image<double>&);
template Image<std::uint16_t> to_u16<float>(const Image<float>&);
template Image<std::uint16_t> to_u16<double>(const Image<double>&);

}  // namespace langfield
