// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace langfield {

/// Row-major K x C matrix; atom k is row k.
using AtomMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One anisotropic 3D Gaussian carrying a mixture over the dictionary atoms.
struct GaussianPrimitive {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  /// Unit quaternion stored as (w, x, y, z).
  Eigen::Vector4f rotation{1.0f, 0.0f, 0.0f, 0.0f};
  /// Per-axis standard deviations in meters.
  Eigen::Vector3f scale = Eigen::Vector3f::Ones();
  float opacity = 1.0f;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  /// Point on the K-simplex.
  std::vector<float> weights;
};

/// Globally shared semantic basis: K unit-norm atoms of dimension C.
struct SemanticDictionary {
  AtomMatrix atoms;

  [[nodiscard]] int k() const { return static_cast<int>(atoms.rows()); }
  [[nodiscard]] int c() const { return static_cast<int>(atoms.cols()); }
};

/// Pinhole camera. Pixel (x, y) samples the image plane at (x + 0.5, y + 0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
  int width = 0;
  int height = 0;
  double near = 0.01;
  double far = 100.0;

  /// Builds a camera looking from `eye` towards `target` with +y pointing down in the image.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double fov_y_degrees, int width, int height);

  bool operator==(const Camera&) const = default;
};

struct VocabularyEntry {
  std::string term;
  std::vector<float> embedding;

  bool operator==(const VocabularyEntry&) const = default;
};

/// Named text embeddings used for open-vocabulary queries.
struct VocabularyTable {
  std::vector<VocabularyEntry> entries;

  [[nodiscard]] std::optional<std::size_t> find(const std::string& term) const;
  [[nodiscard]] std::vector<std::string> terms() const;
  [[nodiscard]] bool empty() const { return entries.empty(); }
  [[nodiscard]] std::size_t size() const { return entries.size(); }
};

/// A complete semantic Gaussian field. Immutable once built.
struct Scene {
  std::vector<GaussianPrimitive> primitives;
  SemanticDictionary dictionary;
  VocabularyTable vocabulary;
  std::vector<std::pair<std::string, std::string>> metadata;

  [[nodiscard]] std::optional<std::string> meta(const std::string& key) const;
};

struct ValidationIssue {
  /// Primitive index, or -1 for scene-level problems.
  std::int64_t primitive = -1;
  std::string invariant;
};

using ValidationReport = std::vector<ValidationIssue>;

inline constexpr double kQuaternionNormTolerance = 1e-6;
inline constexpr double kSimplexTolerance = 1e-5;
inline constexpr double kAtomNormTolerance = 1e-6;

/// Checks every primitive, dictionary and vocabulary invariant. Never throws.
ValidationReport validate_scene(const Scene& scene);

/// Jittered-grid scene split into `n_regions` vertical stripes along x; region r uses atom r.
/// Deterministic for a fixed seed. Throws InvalidArgument when n_regions > k.
Scene make_synthetic_scene(std::uint64_t seed, std::size_t n_primitives, int k, int c,
                           int n_regions);

/// Region index that make_synthetic_scene assigned to primitive i (argmax of its weights).
int dominant_atom(const GaussianPrimitive& primitive);

/// Camera that frames the synthetic grid (which spans [-1, 1] x [-1, 1] at z = 0).
Camera synthetic_camera(int width, int height, double azimuth_degrees = 0.0,
                        double elevation_degrees = 0.0, double distance = 3.0);

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

/// Byte-level LFS1 encoding, exposed for in-memory use and tests.
std::vector<std::uint8_t> encode_scene(const Scene& scene);
Scene decode_scene(const std::vector<std::uint8_t>& bytes);

}  // namespace langfield
