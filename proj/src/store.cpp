// SPDX-License-Identifier: Apache-2.0
#include <fmt/format.h>

#include "langfield/binary_io.hpp"
#include "langfield/pipeline.hpp"

namespace langfield {

namespace {

constexpr std::string_view kMagic = "LPS1";
constexpr std::string_view kFooter = "LPSE";
constexpr std::uint32_t kVersion = 1;

}  // namespace

RleRegion RleRegion::encode(const Mask& mask) {
  RleRegion r;
  r.width = mask.width;
  r.height = mask.height;
  const auto n = static_cast<std::uint32_t>(mask.bits.size());
  for (std::uint32_t i = 0; i < n;) {
    if (!mask.bits[i]) {
      ++i;
      continue;
    }
    std::uint32_t j = i;
    while (j < n && mask.bits[j]) ++j;
    r.runs.emplace_back(i, j - i);
    i = j;
  }
  return r;
}

Mask RleRegion::decode() const {
  Mask m(width, height);
  for (const auto& [start, len] : runs) {
    if (static_cast<std::size_t>(start) + len > m.bits.size()) throw FormatError("RLE run exceeds the region");
    std::fill_n(m.bits.begin() + start, len, std::uint8_t{1});
  }
  return m;
}

std::size_t RleRegion::area() const {
  std::size_t a = 0;
  for (const auto& r : runs) a += r.second;
  return a;
}

std::vector<std::uint8_t> encode_store(const PixelFeatureStore& store) {
  if (store.c < 1) throw InvalidArgument("encode_store: feature dimension must be >= 1");
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(store.c));
  w.u64(store.records.size());
  for (const auto& r : store.records) {
    if (static_cast<int>(r.feature.size()) != store.c) {
      throw InvalidArgument(fmt::format("encode_store: record ({}, {}) has {} feature values, expected {}", r.frame,
                                        r.object, r.feature.size(), store.c));
    }
    w.u32(r.frame);
    w.u32(r.object);
    w.u32(static_cast<std::uint32_t>(r.region.width));
    w.u32(static_cast<std::uint32_t>(r.region.height));
    w.u32(static_cast<std::uint32_t>(r.region.runs.size()));
    for (const auto& [start, len] : r.region.runs) {
      w.u32(start);
      w.u32(len);
    }
    w.f32s(r.feature);
  }
  w.raw(kFooter);
  w.u32(store.complete ? 1u : 0u);
  return w.release();
}

PixelFeatureStore decode_store(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4, "magic") != kMagic) throw FormatError("bad magic bytes (expected LPS1)");
  if (r.u32("version") != kVersion) throw FormatError("unsupported LPS1 version");
  PixelFeatureStore s;
  s.c = static_cast<int>(r.u32("header"));
  if (s.c < 1) throw FormatError("LPS1 feature dimension is zero");
  const std::uint64_t count = r.u64("header");
  for (std::uint64_t i = 0; i < count; ++i) {
    StoreRecord rec;
    rec.frame = r.u32("records");
    rec.object = r.u32("records");
    rec.region.width = static_cast<int>(r.u32("records"));
    rec.region.height = static_cast<int>(r.u32("records"));
    const std::uint32_t runs = r.u32("records");
    r.require(static_cast<std::size_t>(runs) * 8, "records");
    const std::uint64_t pixels = static_cast<std::uint64_t>(rec.region.width) * static_cast<std::uint64_t>(rec.region.height);
    std::uint64_t end = 0;
    for (std::uint32_t k = 0; k < runs; ++k) {
      const std::uint32_t start = r.u32("records");
      const std::uint32_t len = r.u32("records");
      if (start < end || len == 0 || static_cast<std::uint64_t>(start) + len > pixels) {
        throw FormatError(fmt::format("record {} has an invalid run", i));
      }
      end = static_cast<std::uint64_t>(start) + len;
      rec.region.runs.emplace_back(start, len);
    }
    rec.feature.resize(static_cast<std::size_t>(s.c));
    r.f32s(rec.feature, "records");
    s.records.push_back(std::move(rec));
  }
  if (r.remaining() == 0) throw FormatError("missing validity footer; the store was not closed");
  if (r.str(4, "footer") != kFooter) throw FormatError("corrupt validity footer");
  const std::uint32_t flag = r.u32("footer");
  if (flag > 1) throw FormatError("corrupt validity footer");
  s.complete = flag == 1;
  if (r.remaining() != 0) throw FormatError("trailing bytes after LPS1 footer");
  return s;
}

void save_store(const PixelFeatureStore& store, const std::filesystem::path& path) {
  write_file(path, encode_store(store));
}

PixelFeatureStore load_store(const std::filesystem::path& path) { return decode_store(read_file(path)); }

}  // namespace langfield
