// SPDX-License-Identifier: Apache-2.0
#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"
#include "langfield/raster.hpp"

namespace langfield {

std::vector<std::uint8_t> encode_feature_file(const FeatureImage<float>& features) {
  ByteWriter w;
  w.raw("LFF1");
  w.u32(static_cast<std::uint32_t>(features.width));
  w.u32(static_cast<std::uint32_t>(features.height));
  w.u32(static_cast<std::uint32_t>(features.channels));
  w.f32s(features.data);
  return w.release();
}

FeatureImage<float> decode_feature_file(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4, "magic") != "LFF1") throw FormatError("bad magic bytes: not an LFF1 feature file");
  const auto width = r.u32("header");
  const auto height = r.u32("header");
  const auto c = r.u32("header");
  const std::uint64_t count = static_cast<std::uint64_t>(width) * height * c;
  if (count * 4 != r.remaining()) throw FormatError("LFF1 payload size does not match header");
  FeatureImage<float> out(static_cast<int>(width), static_cast<int>(height), static_cast<int>(c));
  r.f32s(out.data, "features");
  return out;
}

}  // namespace langfield
