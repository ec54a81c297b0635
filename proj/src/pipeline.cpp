// SPDX-License-Identifier: Apache-2.0
#include "langfield/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace langfield {

Mask::Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

std::size_t Mask::area() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

namespace {

void check_same_size(const Mask& a, const Mask& b, const char* op) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument(std::string(op) + ": mask sizes differ");
}

}  // namespace

std::size_t intersection_area(const Mask& a, const Mask& b) {
  check_same_size(a, b, "intersection_area");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] & b.bits[i]) != 0;
  return n;
}

double mask_iou(const Mask& a, const Mask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskSet post_nms_filter(const MaskSet& masks, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw InvalidArgument("post_nms_filter: iou threshold must lie in (0, 1)");
  }
  std::vector<std::size_t> areas;
  std::vector<std::size_t> order(masks.masks.size());
  for (const auto& m : masks.masks) areas.push_back(m.mask.area());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (areas[a] != areas[b]) return areas[a] > areas[b];
    return masks.masks[a].id < masks.masks[b].id;
  });
  MaskSet out{masks.frame_index, {}, masks.source};
  for (std::size_t i : order) {
    const auto& cand = masks.masks[i];
    const bool suppressed = std::any_of(out.masks.begin(), out.masks.end(), [&](const ObjectMask& kept) {
      return mask_iou(cand.mask, kept.mask) > iou_threshold;
    });
    if (!suppressed) out.masks.push_back(cand);
  }
  return out;
}

std::vector<ObjectMask> detect_new_objects(const MaskSet& candidates, const MaskSet& propagated,
                                           double coverage_threshold) {
  std::vector<ObjectMask> out;
  if (candidates.masks.empty()) return out;
  const Mask& first = candidates.masks.front().mask;
  Mask covered(first.width, first.height);
  for (const auto& p : propagated.masks) {
    check_same_size(first, p.mask, "detect_new_objects");
    for (std::size_t i = 0; i < covered.bits.size(); ++i) covered.bits[i] |= p.mask.bits[i];
  }
  for (const auto& c : candidates.masks) {
    const std::size_t area = c.mask.area();
    if (area == 0) continue;
    const double coverage = static_cast<double>(intersection_area(c.mask, covered)) / static_cast<double>(area);
    if (coverage < coverage_threshold) out.push_back(c);
  }
  return out;
}

// Synthetic backend ----------------------------------------------------------------------------

namespace {

std::uint32_t packed(const RgbImage& img, std::size_t i) {
  const auto p = img.pixel(i);
  return (static_cast<std::uint32_t>(p[0]) << 16) | (static_cast<std::uint32_t>(p[1]) << 8) | p[2];
}

void check_rgb(const RgbImage& frame, const char* op) {
  if (frame.channels != 3) throw InvalidArgument(std::string(op) + ": frames must be RGB");
}

Mask color_mask(const RgbImage& frame, std::uint32_t color) {
  Mask m(frame.width, frame.height);
  for (std::size_t i = 0; i < frame.pixel_count(); ++i) m.bits[i] = packed(frame, i) == color;
  return m;
}

}  // namespace

std::vector<Mask> ColorMaskGenerator::generate(int, const RgbImage& frame) {
  check_rgb(frame, "ColorMaskGenerator");
  std::vector<std::uint32_t> colors;
  for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
    const std::uint32_t c = packed(frame, i);
    if (c != 0 && std::find(colors.begin(), colors.end(), c) == colors.end()) colors.push_back(c);
  }
  std::vector<Mask> out;
  for (std::uint32_t c : colors) {
    Mask m = color_mask(frame, c);
    // redundant proposal: the same region minus its last pixel
    Mask trimmed = m;
    const auto last = std::find(trimmed.bits.rbegin(), trimmed.bits.rend(), std::uint8_t{1});
    *last = 0;
    out.push_back(std::move(m));
    if (trimmed.area() > 0) out.push_back(std::move(trimmed));
  }
  return out;
}

void ColorPropagator::start(int, const RgbImage& frame, const std::vector<ObjectMask>& objects) {
  check_rgb(frame, "ColorPropagator");
  tracks_.clear();
  for (const auto& o : objects) {
    std::map<std::uint32_t, std::size_t> hist;
    for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
      if (o.mask.bits[i]) ++hist[packed(frame, i)];
    }
    if (hist.empty()) continue;
    const auto best = std::max_element(hist.begin(), hist.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    tracks_.emplace_back(o.id, best->first);
  }
}

std::vector<ObjectMask> ColorPropagator::track(int, const RgbImage& frame) {
  check_rgb(frame, "ColorPropagator");
  std::vector<ObjectMask> out;
  for (const auto& [id, color] : tracks_) {
    Mask m = color_mask(frame, color);
    if (m.area() > 0) out.push_back({id, std::move(m)});
  }
  return out;
}

ColorEmbedder::ColorEmbedder(int dim, std::uint64_t seed) {
  if (dim < 1) throw InvalidArgument("ColorEmbedder: dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  projection_.resize(dim, 4);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = g(rng);
}

std::vector<float> ColorEmbedder::embed(const RgbImage& frame, const Mask& mask) {
  check_rgb(frame, "ColorEmbedder");
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
    if (!mask.bits[i]) continue;
    const auto p = frame.pixel(i);
    mean.head<3>() += Eigen::Vector3d(p[0], p[1], p[2]) / 255.0;
    ++n;
  }
  if (n == 0) throw InvalidArgument("ColorEmbedder: empty mask");
  mean.head<3>() /= static_cast<double>(n);
  mean[3] = 1.0;
  const Eigen::VectorXd f = (projection_ * mean).normalized();
  std::vector<float> out(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) out[i] = static_cast<float>(f[i]);
  return out;
}

ComponentSuite synthetic_suite(int dim, std::uint64_t seed) {
  return {std::make_shared<ColorMaskGenerator>(), std::make_shared<ColorPropagator>(),
          std::make_shared<ColorEmbedder>(dim, seed)};
}

std::vector<RectTrack> rect_sequence_tracks(int width, int height, int third_entry) {
  std::vector<RectTrack> t = {
      {width / 16, height / 6, 12, 10, 3, 0, 0, {220, 60, 40}},
      {(5 * width) / 8, (7 * height) / 12, 10, 12, -2, -1, 0, {40, 120, 220}},
  };
  if (third_entry >= 0) t.push_back({width - 4, (3 * height) / 4, 10, 8, -2, 0, third_entry, {60, 200, 90}});
  return t;
}

std::vector<RgbImage> make_rect_sequence(int frames, int width, int height, int third_entry) {
  if (frames < 1 || width < 16 || height < 16) throw InvalidArgument("make_rect_sequence: sequence too small");
  std::vector<RgbImage> out;
  const auto tracks = rect_sequence_tracks(width, height, third_entry);
  for (int f = 0; f < frames; ++f) {
    RgbImage img(width, height, 3, 0);
    for (const auto& r : tracks) {
      if (f < r.first_frame) continue;
      const int steps = f - r.first_frame;
      const int x0 = r.x0 + r.dx * steps;
      const int y0 = r.y0 + r.dy * steps;
      for (int y = std::max(0, y0); y < std::min(height, y0 + r.h); ++y) {
        for (int x = std::max(0, x0); x < std::min(width, x0 + r.w); ++x) {
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = r.color[c];
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

// Orchestration --------------------------------------------------------------------------------

namespace {

struct StageFailure {
  int frame;
  std::string component;
  std::string message;
};

template <typename F>
auto guarded(int frame, const char* component, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw StageFailure{frame, component, e.what()};
  }
}

void check_masks(const std::vector<ObjectMask>& masks, const RgbImage& frame, int t, const char* component) {
  for (const auto& m : masks) {
    if (m.mask.width != frame.width || m.mask.height != frame.height ||
        m.mask.bits.size() != frame.pixel_count()) {
      throw StageFailure{t, component, "mask resolution differs from the frame"};
    }
  }
}

/// Embeds every stored (frame, object) pair; records come out in (frame, stored order).
/// On failure returns the records before the first failing pair and sets `failure`.
std::vector<StoreRecord> embed_all(std::span<const RgbImage> frames, const std::vector<MaskSet>& stored,
                                   PixelEmbedder& embedder, int threads, std::optional<StageFailure>& failure) {
  std::vector<std::pair<int, const ObjectMask*>> jobs;
  for (const auto& set : stored) {
    for (const auto& m : set.masks) jobs.emplace_back(set.frame_index, &m);
  }
  std::vector<StoreRecord> records(jobs.size());
  std::vector<std::optional<StageFailure>> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const int c = embedder.dim();
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto [t, obj] = jobs[j];
      try {
        auto f = embedder.embed(frames[static_cast<std::size_t>(t)], obj->mask);
        if (static_cast<int>(f.size()) != c) throw InvalidArgument("embedding has the wrong dimension");
        records[j] = {static_cast<std::uint32_t>(t), obj->id, RleRegion::encode(obj->mask), std::move(f)};
      } catch (const std::exception& e) {
        errors[j] = StageFailure{t, "pixel_embedder", e.what()};
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (errors[j]) {
      failure = errors[j];
      records.resize(j);
      break;
    }
  }
  return records;
}

std::string describe(const StageFailure& f) {
  return fmt::format("collection failed at frame {} in {}: {}", f.frame, f.component, f.message);
}

}  // namespace

CollectionResult run_collection(std::span<const RgbImage> frames, const ComponentSuite& suite,
                                const CollectionConfig& config) {
  if (frames.empty()) throw InvalidArgument("run_collection: no frames");
  if (!suite.generator || !suite.propagator || !suite.embedder) {
    throw InvalidArgument("run_collection: component suite is incomplete");
  }
  for (const auto& f : frames) {
    if (f.channels != 3 || f.width != frames[0].width || f.height != frames[0].height) {
      throw InvalidArgument("run_collection: frames must be RGB with one resolution");
    }
  }

  CollectionResult result;
  result.store.c = suite.embedder->dim();
  std::uint32_t next_id = 0;
  std::optional<StageFailure> failure;

  try {
    for (std::size_t ti = 0; ti < frames.size(); ++ti) {
      const int t = static_cast<int>(ti);
      const RgbImage& frame = frames[ti];
      FrameLog log;
      log.frame = t;

      MaskSet candidates{t, {}, MaskSource::generated};
      const auto raw = guarded(t, "mask_generator", [&] { return suite.generator->generate(t, frame); });
      for (std::size_t i = 0; i < raw.size(); ++i) candidates.masks.push_back({static_cast<std::uint32_t>(i), raw[i]});
      check_masks(candidates.masks, frame, t, "mask_generator");
      log.candidates = candidates.masks.size();
      candidates = post_nms_filter(candidates, config.nms_iou);
      log.after_nms = candidates.masks.size();

      MaskSet propagated{t, {}, MaskSource::propagated};
      if (t > 0) {
        propagated.masks = guarded(t, "mask_propagator", [&] { return suite.propagator->track(t, frame); });
        check_masks(propagated.masks, frame, t, "mask_propagator");
      }
      auto fresh = detect_new_objects(candidates, propagated, config.new_coverage);

      MaskSet objects = propagated;
      for (auto& m : fresh) {
        m.id = next_id++;
        log.new_ids.push_back(m.id);
        objects.masks.push_back(m);
      }
      if (t == 0 || !fresh.empty()) {
        guarded(t, "mask_propagator", [&] {
          suite.propagator->start(t, frame, objects.masks);
          return 0;
        });
        log.propagated = true;
      }

      Mask covered(frame.width, frame.height);
      for (const auto& m : objects.masks) {
        for (std::size_t i = 0; i < covered.bits.size(); ++i) covered.bits[i] |= m.mask.bits[i];
      }
      log.masks = objects.masks.size();
      log.covered_pixels = covered.area();
      log.total_pixels = frame.pixel_count();
      result.log.push_back(std::move(log));
      result.stored_masks.push_back(std::move(objects));
    }
  } catch (const StageFailure& f) {
    failure = f;
  }

  std::optional<StageFailure> embed_failure;
  result.store.records = embed_all(frames, result.stored_masks, *suite.embedder, config.threads, embed_failure);
  if (!failure) failure = embed_failure;
  if (failure) {
    result.store.complete = false;
    throw CollectionError(describe(*failure), std::move(result.store));
  }
  return result;
}

std::string collection_summary(const std::vector<FrameLog>& log) {
  std::size_t masks = 0, covered = 0, total = 0, events = 0;
  for (const auto& f : log) {
    masks += f.masks;
    covered += f.covered_pixels;
    total += f.total_pixels;
    events += f.new_ids.empty() ? 0 : 1;
  }
  std::ostringstream out;
  out << fmt::format("{:<28}{:>12}\n", "frames", log.size());
  out << fmt::format("{:<28}{:>12.2f}\n", "masks/image", log.empty() ? 0.0 : static_cast<double>(masks) / log.size());
  out << fmt::format("{:<28}{:>11.2f}%\n", "mask coverage",
                     total == 0 ? 0.0 : 100.0 * static_cast<double>(covered) / static_cast<double>(total));
  out << fmt::format("{:<28}{:>12}\n", "new-object events", events);
  for (const auto& f : log) {
    std::string ids;
    for (auto id : f.new_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    out << fmt::format("frame {:>4}  candidates {:>3}  kept {:>3}  masks {:>3}  covered {}/{}{}{}\n", f.frame,
                       f.candidates, f.after_nms, f.masks, f.covered_pixels, f.total_pixels,
                       ids.empty() ? "" : "  new " + ids, f.propagated ? "  propagate" : "");
  }
  return out.str();
}

GroupSupervision export_supervision(const PixelFeatureStore& store, int frame, int width, int height) {
  std::vector<const StoreRecord*> rows;
  for (const auto& r : store.records) {
    if (r.frame == static_cast<std::uint32_t>(frame)) rows.push_back(&r);
  }
  if (rows.empty()) throw Error(fmt::format("export_supervision: frame {} is absent from the store", frame));
  std::sort(rows.begin(), rows.end(), [](const StoreRecord* a, const StoreRecord* b) { return a->object < b->object; });

  GroupSupervision out;
  const auto s = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> claimed(s, 0);
  out.masks_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(s));
  out.gt_features.resize(static_cast<Eigen::Index>(rows.size()), store.c);
  for (std::size_t g = 0; g < rows.size(); ++g) {
    const StoreRecord& r = *rows[g];
    if (r.region.width != width || r.region.height != height) {
      throw Error(fmt::format("export_supervision: record for object {} has resolution {}x{}, expected {}x{}", r.object,
                              r.region.width, r.region.height, width, height));
    }
    if (g > 0 && rows[g - 1]->object == r.object) {
      throw Error(fmt::format("export_supervision: object {} has several records in frame {}", r.object, frame));
    }
    Mask m = r.region.decode();
    for (std::size_t i = 0; i < s; ++i) {
      if (!m.bits[i]) continue;
      if (claimed[i]) throw Error(fmt::format("export_supervision: pixel {} of frame {} lies in two records", i, frame));
      claimed[i] = 1;
      out.masks_matrix(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = 1.0;
    }
    for (int c = 0; c < store.c; ++c) out.gt_features(static_cast<Eigen::Index>(g), c) = r.feature[c];
    out.object_ids.push_back(r.object);
    out.masks.push_back(std::move(m));
  }
  return out;
}

std::vector<StoreRecord> ingest_supervision(int frame, const GroupSupervision& groups) {
  if (groups.masks.size() != groups.object_ids.size() ||
      static_cast<Eigen::Index>(groups.masks.size()) != groups.gt_features.rows()) {
    throw InvalidArgument("ingest_supervision: inconsistent group counts");
  }
  std::vector<StoreRecord> out;
  for (std::size_t g = 0; g < groups.masks.size(); ++g) {
    std::vector<float> f(static_cast<std::size_t>(groups.gt_features.cols()));
    for (std::size_t c = 0; c < f.size(); ++c) f[c] = static_cast<float>(groups.gt_features(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(c)));
    out.push_back({static_cast<std::uint32_t>(frame), groups.object_ids[g], RleRegion::encode(groups.masks[g]), std::move(f)});
  }
  return out;
}

}  // namespace langfield
