// SPDX-License-Identifier: Apache-2.0
//
// Continuous semantic label collection: candidate masks, NMS, new-object detection, propagation
// and per-region embedding into a pixel/feature store.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "langfield/error.hpp"
#include "langfield/image.hpp"

namespace langfield {

using RgbImage = Image<std::uint8_t>;

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Mask() = default;
  Mask(int w, int h);

  [[nodiscard]] bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] std::size_t area() const;
  bool operator==(const Mask&) const = default;
};

std::size_t intersection_area(const Mask& a, const Mask& b);
double mask_iou(const Mask& a, const Mask& b);

struct ObjectMask {
  std::uint32_t id = 0;
  Mask mask;
  bool operator==(const ObjectMask&) const = default;
};

enum class MaskSource { generated, propagated };

struct MaskSet {
  int frame_index = 0;
  std::vector<ObjectMask> masks;
  MaskSource source = MaskSource::generated;
};

inline constexpr double kDefaultNmsIou = 0.8;
inline constexpr double kDefaultNewCoverage = 0.5;

/// Greedy suppression by descending area; drops masks with IoU > threshold against a kept mask.
/// Output is ordered by area (descending) then id.
MaskSet post_nms_filter(const MaskSet& masks, double iou_threshold = kDefaultNmsIou);

/// Candidates whose covered fraction by the union of propagated masks is < coverage_threshold.
std::vector<ObjectMask> detect_new_objects(const MaskSet& candidates, const MaskSet& propagated,
                                           double coverage_threshold = kDefaultNewCoverage);

// Pluggable components.
class MaskGenerator {
 public:
  virtual ~MaskGenerator() = default;
  virtual std::vector<Mask> generate(int frame_index, const RgbImage& frame) = 0;
};

class MaskPropagator {
 public:
  virtual ~MaskPropagator() = default;
  /// Restarts tracking of `objects` from this frame.
  virtual void start(int frame_index, const RgbImage& frame, const std::vector<ObjectMask>& objects) = 0;
  /// Masks of the tracked objects in a later frame.
  virtual std::vector<ObjectMask> track(int frame_index, const RgbImage& frame) = 0;
};

class PixelEmbedder {
 public:
  virtual ~PixelEmbedder() = default;
  [[nodiscard]] virtual int dim() const = 0;
  virtual std::vector<float> embed(const RgbImage& frame, const Mask& mask) = 0;
};

struct ComponentSuite {
  std::shared_ptr<MaskGenerator> generator;
  std::shared_ptr<MaskPropagator> propagator;
  std::shared_ptr<PixelEmbedder> embedder;
};

// Synthetic backend: flat-colour frames on a black background.

/// One mask per distinct non-black colour, each followed by a near-duplicate missing one pixel.
class ColorMaskGenerator : public MaskGenerator {
 public:
  std::vector<Mask> generate(int frame_index, const RgbImage& frame) override;
};

/// Follows each object's dominant colour from frame to frame.
class ColorPropagator : public MaskPropagator {
 public:
  void start(int frame_index, const RgbImage& frame, const std::vector<ObjectMask>& objects) override;
  std::vector<ObjectMask> track(int frame_index, const RgbImage& frame) override;

 private:
  std::vector<std::pair<std::uint32_t, std::uint32_t>> tracks_;  // (id, packed rgb)
};

/// Mean colour of the region pushed through a fixed random projection, unit-normalised.
class ColorEmbedder : public PixelEmbedder {
 public:
  ColorEmbedder(int dim, std::uint64_t seed);
  [[nodiscard]] int dim() const override { return static_cast<int>(projection_.rows()); }
  std::vector<float> embed(const RgbImage& frame, const Mask& mask) override;

 private:
  Eigen::MatrixXd projection_;  // dim x 4 (rgb + bias)
};

ComponentSuite synthetic_suite(int dim, std::uint64_t seed);

struct RectTrack {
  int x0, y0, w, h;  // position at its first frame
  int dx, dy;        // motion per frame
  int first_frame;
  std::array<std::uint8_t, 3> color;
};

/// Frames of moving flat-colour rectangles. Two rectangles; a third enters at `third_entry` if >= 0.
std::vector<RgbImage> make_rect_sequence(int frames, int width, int height, int third_entry = -1);
std::vector<RectTrack> rect_sequence_tracks(int width, int height, int third_entry);

// Pixel/feature store.

/// Run-length region: (start, length) runs over the row-major pixel index.
struct RleRegion {
  int width = 0;
  int height = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;

  static RleRegion encode(const Mask& mask);
  [[nodiscard]] Mask decode() const;
  [[nodiscard]] std::size_t area() const;
  bool operator==(const RleRegion&) const = default;
};

struct StoreRecord {
  std::uint32_t frame = 0;
  std::uint32_t object = 0;
  RleRegion region;
  std::vector<float> feature;
  bool operator==(const StoreRecord&) const = default;
};

struct PixelFeatureStore {
  int c = 0;
  std::vector<StoreRecord> records;
  bool complete = true;  // false when collection stopped early
};

std::vector<std::uint8_t> encode_store(const PixelFeatureStore& store);
PixelFeatureStore decode_store(std::span<const std::uint8_t> bytes);
void save_store(const PixelFeatureStore& store, const std::filesystem::path& path);
PixelFeatureStore load_store(const std::filesystem::path& path);

struct CollectionConfig {
  double nms_iou = kDefaultNmsIou;
  double new_coverage = kDefaultNewCoverage;
  int threads = 1;  // embedding pass
};

struct FrameLog {
  int frame = 0;
  std::size_t candidates = 0;
  std::size_t after_nms = 0;
  std::vector<std::uint32_t> new_ids;
  bool propagated = false;  // propagation (re)started here
  std::size_t masks = 0;
  std::size_t covered_pixels = 0;
  std::size_t total_pixels = 0;
};

struct CollectionResult {
  PixelFeatureStore store;
  std::vector<FrameLog> log;
  std::vector<MaskSet> stored_masks;
};

/// Raised when a component fails; carries the partial store (complete = false).
class CollectionError : public Error {
 public:
  CollectionError(const std::string& what, PixelFeatureStore partial)
      : Error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const PixelFeatureStore& partial() const { return partial_; }

 private:
  PixelFeatureStore partial_;
};

CollectionResult run_collection(std::span<const RgbImage> frames, const ComponentSuite& suite,
                                const CollectionConfig& config = {});

/// Masks-per-image and coverage table.
std::string collection_summary(const std::vector<FrameLog>& log);

struct GroupSupervision {
  std::vector<std::uint32_t> object_ids;
  std::vector<Mask> masks;
  Eigen::MatrixXd masks_matrix;  // G x S
  Eigen::MatrixXd gt_features;   // G x C
};

/// Group masks and features of one frame. Throws on a missing frame, a resolution mismatch or
/// pixels claimed by two records.
GroupSupervision export_supervision(const PixelFeatureStore& store, int frame, int width, int height);
/// Inverse of export_supervision for one frame.
std::vector<StoreRecord> ingest_supervision(int frame, const GroupSupervision& groups);

// Subprocess adapter for external components (newline-delimited JSON over stdin/stdout).

class AdapterProcess {
 public:
  explicit AdapterProcess(std::vector<std::string> argv);
  ~AdapterProcess();
  AdapterProcess(const AdapterProcess&) = delete;
  AdapterProcess& operator=(const AdapterProcess&) = delete;

  /// Sends one JSON request line and returns the response line. Throws on I/O failure or an
  /// {"error": ...} response.
  std::string request(const std::string& json_line);
  [[nodiscard]] int dim() const { return dim_; }

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  int dim_ = 0;
};

/// Suite whose three components forward to one adapter process. Performs the hello handshake.
ComponentSuite adapter_suite(std::vector<std::string> argv);

std::string encode_mask_b64(const Mask& mask);
Mask decode_mask_b64(const std::string& b64, int width, int height);

}  // namespace langfield
