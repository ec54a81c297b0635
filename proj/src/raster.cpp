// SPDX-License-Identifier: Apache-2.0
#include "langfield/raster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "langfield/error.hpp"

namespace langfield {

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LANGFIELD_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::optional<ProjectedSplat> project(const GaussianPrimitive& primitive, const Camera& camera,
                                      std::size_t index) {
  const Eigen::Matrix3d view_rot = camera.world_to_camera.topLeftCorner<3, 3>();
  const Eigen::Vector3d view_t = camera.world_to_camera.topRightCorner<3, 1>();
  const Eigen::Vector3d pc = view_rot * primitive.position.cast<double>() + view_t;
  const double z = pc.z();
  if (!(z > camera.near && z < camera.far)) return std::nullopt;

  const Eigen::Vector4d q = primitive.rotation.cast<double>().normalized();
  const Eigen::Matrix3d rot =
      Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
  const Eigen::Vector3d var = primitive.scale.cast<double>().array().square();
  const Eigen::Matrix3d cov3d = rot * var.asDiagonal() * rot.transpose();

  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx / z, 0.0, -camera.fx * pc.x() / (z * z),
         0.0, camera.fy / z, -camera.fy * pc.y() / (z * z);
  const Eigen::Matrix<double, 2, 3> t = jac * view_rot;

  ProjectedSplat s;
  s.primitive_index = index;
  s.depth = z;
  s.mean2d = {camera.fx * pc.x() / z + camera.cx, camera.fy * pc.y() / z + camera.cy};
  s.cov2d = t * cov3d * t.transpose();
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
  s.cov2d += kCovarianceFloor * Eigen::Matrix2d::Identity();

  const double a = s.cov2d(0, 0);
  const double b = s.cov2d(0, 1);
  const double c = s.cov2d(1, 1);
  const double det = a * c - b * b;
  if (!(det > 0.0)) return std::nullopt;
  s.conic = {c / det, -b / det, a / det};

  const double mid = 0.5 * (a + c);
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double radius = 3.0 * std::sqrt(lambda_max);
  s.x_min = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - radius - 0.5)));
  s.x_max = std::min(camera.width - 1, static_cast<int>(std::floor(s.mean2d.x() + radius - 0.5)));
  s.y_min = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - radius - 0.5)));
  s.y_max = std::min(camera.height - 1, static_cast<int>(std::floor(s.mean2d.y() + radius - 0.5)));
  if (s.x_min > s.x_max || s.y_min > s.y_max) return std::nullopt;
  return s;
}

namespace {

// Geometry and transmittance stay in double for both precisions, so fragment selection does not
// depend on Real.
struct Splat {
  double mx, my;
  double ca, cb, cc;
  double opacity;
  double depth;
  int x_min, x_max, y_min, y_max;
  std::size_t primitive;
};

/// Projected splats in canonical front-to-back order plus per-tile index lists.
template <typename Real>
struct Binning {
  std::vector<Splat> splats;
  std::vector<std::vector<std::uint32_t>> tiles;
  int tiles_x = 0, tiles_y = 0, tile_size = 16;
};

std::vector<ProjectedSplat> project_sorted(const Scene& scene, const Camera& camera) {
  std::vector<ProjectedSplat> visible;
  visible.reserve(scene.primitives.size());
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    if (auto s = project(scene.primitives[i], camera, i)) visible.push_back(*s);
  }
  std::sort(visible.begin(), visible.end(), [](const ProjectedSplat& l, const ProjectedSplat& r) {
    if (l.depth != r.depth) return l.depth < r.depth;
    return l.primitive_index < r.primitive_index;
  });
  return visible;
}

template <typename Real>
Binning<Real> bin(const Scene& scene, const Camera& camera, int tile_size) {
  if (tile_size < 1) throw InvalidArgument("render: tile size must be >= 1");
  if (camera.width < 0 || camera.height < 0) throw InvalidArgument("render: negative image size");
  Binning<Real> b;
  b.tile_size = tile_size;
  b.tiles_x = (camera.width + tile_size - 1) / tile_size;
  b.tiles_y = (camera.height + tile_size - 1) / tile_size;
  b.tiles.resize(static_cast<std::size_t>(b.tiles_x) * static_cast<std::size_t>(b.tiles_y));

  const auto visible = project_sorted(scene, camera);
  b.splats.reserve(visible.size());
  for (const auto& s : visible) {
    const auto& prim = scene.primitives[s.primitive_index];
    b.splats.push_back({s.mean2d.x(), s.mean2d.y(), s.conic[0], s.conic[1], s.conic[2],
                        static_cast<double>(prim.opacity), s.depth, s.x_min, s.x_max, s.y_min, s.y_max,
                        s.primitive_index});
    const auto id = static_cast<std::uint32_t>(b.splats.size() - 1);
    for (int ty = s.y_min / tile_size; ty <= s.y_max / tile_size; ++ty) {
      for (int tx = s.x_min / tile_size; tx <= s.x_max / tile_size; ++tx) {
        b.tiles[static_cast<std::size_t>(ty) * b.tiles_x + tx].push_back(id);
      }
    }
  }
  return b;
}

/// Walks the fragments covering pixel (x, y) front to back, calling
/// fn(splat_id, contribution = T_i * a_i). Returns the final transmittance.
template <typename Real, typename Fn>
double composite_pixel(const Binning<Real>& b, const std::vector<std::uint32_t>& list, int x, int y,
                       Fn&& fn) {
  const double px = x + 0.5;
  const double py = y + 0.5;
  double transmittance = 1;
  for (const std::uint32_t id : list) {
    const Splat& s = b.splats[id];
    if (x < s.x_min || x > s.x_max || y < s.y_min || y > s.y_max) continue;
    const double dx = px - s.mx;
    const double dy = py - s.my;
    const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
    if (power > 0) continue;
    const double a = std::min(kMaxFragmentAlpha, s.opacity * std::exp(power));
    if (a < kMinFragmentAlpha) continue;
    fn(id, transmittance * a);
    transmittance *= 1.0 - a;
    if (transmittance < kTransmittanceCutoff) break;
  }
  return transmittance;
}

/// Runs tile_fn(tile_index) over all tiles with dynamic scheduling. Each tile writes only its own
/// pixels, so the result is independent of the thread count.
template <typename TileFn>
void for_each_tile(std::size_t tile_count, int threads, TileFn&& tile_fn) {
  const int workers = std::min<int>(resolve_thread_count(threads), static_cast<int>(std::max<std::size_t>(1, tile_count)));
  if (workers <= 1) {
    for (std::size_t t = 0; t < tile_count; ++t) tile_fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next.fetch_add(1); t < tile_count; t = next.fetch_add(1)) tile_fn(t);
    });
  }
}

void check_scene_k(const Scene& scene) {
  const auto k = static_cast<std::size_t>(scene.dictionary.k());
  for (const auto& p : scene.primitives) {
    if (p.weights.size() != k) throw InvalidArgument("render: primitive weights length differs from K");
  }
}

}  // namespace

template <typename Real>
RenderOutput<Real> render(const Scene& scene, const Camera& camera, const RenderOptions& options) {
  check_scene_k(scene);
  const int k = scene.dictionary.k();
  const auto b = bin<Real>(scene, camera, options.tile_size);

  // Per-splat attributes in splat order for locality.
  std::vector<Real> colors(b.splats.size() * 3);
  std::vector<Real> weights(b.splats.size() * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < b.splats.size(); ++i) {
    const auto& prim = scene.primitives[b.splats[i].primitive];
    for (int ch = 0; ch < 3; ++ch) colors[i * 3 + ch] = static_cast<Real>(prim.color[ch]);
    for (int a = 0; a < k; ++a) weights[i * k + a] = static_cast<Real>(prim.weights[a]);
  }

  RenderOutput<Real> out;
  out.rgb = Image<Real>(camera.width, camera.height, 3);
  out.depth = Image<Real>(camera.width, camera.height, 1);
  out.alpha = Image<Real>(camera.width, camera.height, 1);
  out.weight_maps = Image<Real>(camera.width, camera.height, k);

  for_each_tile(b.tiles.size(), options.threads, [&](std::size_t t) {
    const int tx = static_cast<int>(t % static_cast<std::size_t>(b.tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(b.tiles_x));
    const auto& list = b.tiles[t];
    if (list.empty()) return;
    const int x_end = std::min(camera.width, (tx + 1) * b.tile_size);
    const int y_end = std::min(camera.height, (ty + 1) * b.tile_size);
    for (int y = ty * b.tile_size; y < y_end; ++y) {
      for (int x = tx * b.tile_size; x < x_end; ++x) {
        double rgb[3] = {0, 0, 0};
        double depth = 0;
        double alpha = 0;
        Real* wmap = &out.weight_maps.at(x, y);
        composite_pixel(b, list, x, y, [&](std::uint32_t id, double contrib) {
          const Real* c = &colors[id * 3];
          rgb[0] += contrib * c[0];
          rgb[1] += contrib * c[1];
          rgb[2] += contrib * c[2];
          depth += contrib * b.splats[id].depth;
          alpha += contrib;
          const Real cr = static_cast<Real>(contrib);
          const Real* w = &weights[static_cast<std::size_t>(id) * k];
          for (int a = 0; a < k; ++a) wmap[a] += cr * w[a];
        });
        for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = static_cast<Real>(rgb[ch]);
        out.depth.at(x, y) = static_cast<Real>(depth);
        out.alpha.at(x, y) = static_cast<Real>(alpha);
      }
    }
  });
  return out;
}

template <typename Real>
FeatureImage<Real> assemble_features(const WeightMapStack<Real>& weight_maps,
                                     const SemanticDictionary& dictionary) {
  const int k = dictionary.k();
  const int c = dictionary.c();
  if (weight_maps.channels != k) {
    throw InvalidArgument("assemble_features: weight stack has " + std::to_string(weight_maps.channels) +
                          " maps but the dictionary has K=" + std::to_string(k));
  }
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  const auto pixels = static_cast<Eigen::Index>(weight_maps.pixel_count());
  FeatureImage<Real> out(weight_maps.width, weight_maps.height, c);
  const Mat basis = dictionary.atoms.transpose().template cast<Real>();  // C x K
  Eigen::Map<const Mat> w(weight_maps.data.data(), k, pixels);
  Eigen::Map<Mat> f(out.data.data(), c, pixels);
  f.noalias() = basis * w;
  return out;
}

template <typename Real>
FeatureImage<Real> render_features_direct(const Scene& scene, const Camera& camera,
                                          const RenderOptions& options) {
  check_scene_k(scene);
  const int k = scene.dictionary.k();
  const int c = scene.dictionary.c();
  const auto b = bin<Real>(scene, camera, options.tile_size);

  // f_i = sum_k w_ik d_k, materialized per visible primitive.
  std::vector<Real> features(b.splats.size() * static_cast<std::size_t>(c), Real(0));
  for (std::size_t i = 0; i < b.splats.size(); ++i) {
    const auto& prim = scene.primitives[b.splats[i].primitive];
    Real* f = &features[i * c];
    for (int a = 0; a < k; ++a) {
      const Real w = static_cast<Real>(prim.weights[a]);
      if (w == Real(0)) continue;
      const float* atom = scene.dictionary.atoms.row(a).data();
      for (int ch = 0; ch < c; ++ch) f[ch] += w * static_cast<Real>(atom[ch]);
    }
  }

  FeatureImage<Real> out(camera.width, camera.height, c);
  for_each_tile(b.tiles.size(), options.threads, [&](std::size_t t) {
    const int tx = static_cast<int>(t % static_cast<std::size_t>(b.tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(b.tiles_x));
    const auto& list = b.tiles[t];
    if (list.empty()) return;
    const int x_end = std::min(camera.width, (tx + 1) * b.tile_size);
    const int y_end = std::min(camera.height, (ty + 1) * b.tile_size);
    for (int y = ty * b.tile_size; y < y_end; ++y) {
      for (int x = tx * b.tile_size; x < x_end; ++x) {
        Real* acc = &out.at(x, y);
        composite_pixel(b, list, x, y, [&](std::uint32_t id, double contrib) {
          const Real cr = static_cast<Real>(contrib);
          const Real* f = &features[static_cast<std::size_t>(id) * c];
          for (int ch = 0; ch < c; ++ch) acc[ch] += cr * f[ch];
        });
      }
    }
  });
  return out;
}

double pixel_transmittance(const Scene& scene, const Camera& camera, int x, int y) {
  const auto visible = project_sorted(scene, camera);
  double product = 1.0;
  for (const auto& s : visible) {
    if (x < s.x_min || x > s.x_max || y < s.y_min || y > s.y_max) continue;
    const double dx = x + 0.5 - s.mean2d.x();
    const double dy = y + 0.5 - s.mean2d.y();
    const double power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    if (power > 0.0) continue;
    const double a = std::min(kMaxFragmentAlpha, scene.primitives[s.primitive_index].opacity * std::exp(power));
    if (a < kMinFragmentAlpha) continue;
    product *= 1.0 - a;
    if (product < kTransmittanceCutoff) break;
  }
  return product;
}

template RenderOutput<float> render<float>(const Scene&, const Camera&, const RenderOptions&);
template RenderOutput<double> render<double>(const Scene&, const Camera&, const RenderOptions&);
template FeatureImage<float> assemble_features<float>(const WeightMapStack<float>&, const SemanticDictionary&);
template FeatureImage<double> assemble_features<double>(const WeightMapStack<double>&, const SemanticDictionary&);
template FeatureImage<float> render_features_direct<float>(const Scene&, const Camera&, const RenderOptions&);
template FeatureImage<double> render_features_direct<double>(const Scene&, const Camera&, const RenderOptions&);

}  // namespace langfield
