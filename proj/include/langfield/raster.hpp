// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>
#include <optional>

#include <Eigen/Core>

#include "langfield/image.hpp"
#include "langfield/scene.hpp"

namespace langfield {

/// Screen-space footprint of one primitive.
struct ProjectedSplat {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  /// Includes the anti-aliasing floor.
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
  /// Inverse of cov2d, packed as (a, b, c) for a*dx^2 + 2*b*dx*dy + c*dy^2.
  Eigen::Vector3d conic = Eigen::Vector3d::Zero();
  double depth = 0.0;
  std::size_t primitive_index = 0;
  /// Inclusive pixel bounds of the 3-sigma footprint, clipped to the image.
  int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
};

inline constexpr double kCovarianceFloor = 0.3;
inline constexpr double kMaxFragmentAlpha = 0.99;
inline constexpr double kMinFragmentAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;

/// Projects one primitive; std::nullopt when clipped by near/far or entirely off-screen.
std::optional<ProjectedSplat> project(const GaussianPrimitive& primitive, const Camera& camera,
                                      std::size_t index = 0);

struct RenderOptions {
  int tile_size = 16;
  /// 0 selects LANGFIELD_THREADS or the hardware concurrency.
  int threads = 0;
};

/// K per-atom scalar maps W_k(p), stored interleaved (K channels per pixel).
template <typename Real>
using WeightMapStack = Image<Real>;

/// C-dimensional rendered feature per pixel.
template <typename Real>
using FeatureImage = Image<Real>;

template <typename Real>
struct RenderOutput {
  Image<Real> rgb;    // 3 channels
  Image<Real> depth;  // expected depth, sum of T_i a_i z_i
  Image<Real> alpha;  // sum of T_i a_i
  WeightMapStack<Real> weight_maps;
};

/// Alpha-composites color, depth and the K weight maps in one front-to-back pass.
template <typename Real>
RenderOutput<Real> render(const Scene& scene, const Camera& camera, const RenderOptions& options = {});

/// Weight-first feature assembly: F_p = D * W(p).
template <typename Real>
FeatureImage<Real> assemble_features(const WeightMapStack<Real>& weight_maps,
                                     const SemanticDictionary& dictionary);

/// Feature-first compositing of per-primitive features f_i = sum_k w_ik d_k, using the same
/// fragment schedule as render().
template <typename Real>
FeatureImage<Real> render_features_direct(const Scene& scene, const Camera& camera,
                                          const RenderOptions& options = {});

/// Product over composited fragments of (1 - a_i) at one pixel, evaluated independently of the
/// accumulation in render(). Used to check transmittance telescoping.
double pixel_transmittance(const Scene& scene, const Camera& camera, int x, int y);

int resolve_thread_count(int requested);

/// LFF1 feature file: 16-byte header (magic, width, height, C as u32) then f32 HWC data.
std::vector<std::uint8_t> encode_feature_file(const FeatureImage<float>& features);
FeatureImage<float> decode_feature_file(const std::vector<std::uint8_t>& bytes);

extern template RenderOutput<float> render<float>(const Scene&, const Camera&, const RenderOptions&);
extern template RenderOutput<double> render<double>(const Scene&, const Camera&, const RenderOptions&);
extern template FeatureImage<float> assemble_features<float>(const WeightMapStack<float>&,
                                                             const SemanticDictionary&);
extern template FeatureImage<double> assemble_features<double>(const WeightMapStack<double>&,
                                                               const SemanticDictionary&);
extern template FeatureImage<float> render_features_direct<float>(const Scene&, const Camera&,
                                                                  const RenderOptions&);
extern template FeatureImage<double> render_features_direct<double>(const Scene&, const Camera&,
                                                                    const RenderOptions&);

}  // namespace langfield
