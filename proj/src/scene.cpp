// SPDX-License-Identifier: Apache-2.0
#include "langfield/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"

namespace langfield {

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fov_y_degrees, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);

  Camera cam;
  cam.width = width;
  cam.height = height;
  const double half = fov_y_degrees * std::numbers::pi / 360.0;
  cam.fy = 0.5 * height / std::tan(half);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  Eigen::Matrix3d rot;
  rot.row(0) = right;
  rot.row(1) = down;
  rot.row(2) = forward;
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = rot;
  cam.world_to_camera.topRightCorner<3, 1>() = -rot * eye;
  return cam;
}

std::optional<std::size_t> VocabularyTable::find(const std::string& term) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].term == term) return i;
  }
  return std::nullopt;
}

std::vector<std::string> VocabularyTable::terms() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.term);
  return out;
}

std::optional<std::string> Scene::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

namespace {

bool finite(const auto& v) { return v.allFinite(); }

}  // namespace

ValidationReport validate_scene(const Scene& scene) {
  ValidationReport report;
  auto add = [&](std::int64_t i, std::string what) { report.push_back({i, std::move(what)}); };

  const int k = scene.dictionary.k();
  const int c = scene.dictionary.c();
  if (k < 1) add(-1, "dictionary: K must be >= 1");
  if (c < 1) add(-1, "dictionary: C must be >= 1");
  for (int a = 0; a < k; ++a) {
    const double norm = scene.dictionary.atoms.row(a).cast<double>().norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kAtomNormTolerance) {
      add(-1, "dictionary: atom " + std::to_string(a) + " is not unit norm");
    }
  }

  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    const auto idx = static_cast<std::int64_t>(i);
    if (!finite(p.position)) add(idx, "position: non-finite");
    const double qn = p.rotation.cast<double>().norm();
    if (!std::isfinite(qn) || std::abs(qn - 1.0) > kQuaternionNormTolerance) {
      add(idx, "rotation: quaternion norm differs from 1");
    }
    if (!finite(p.scale) || (p.scale.array() <= 0.0f).any()) add(idx, "scale: must be > 0");
    if (!(p.opacity >= 0.0f && p.opacity <= 1.0f)) add(idx, "opacity: outside [0, 1]");
    if (!finite(p.color) || (p.color.array() < 0.0f).any() || (p.color.array() > 1.0f).any()) {
      add(idx, "color: channel outside [0, 1]");
    }
    if (static_cast<int>(p.weights.size()) != k) {
      add(idx, "weights: length differs from dictionary K");
      continue;
    }
    double sum = 0.0;
    bool negative = false;
    for (float w : p.weights) {
      if (!(w >= 0.0f)) negative = true;
      sum += w;
    }
    if (negative) add(idx, "weights: negative or non-finite entry");
    if (!(std::abs(sum - 1.0) <= kSimplexTolerance)) add(idx, "weights: not on the simplex (sum != 1)");
  }

  std::vector<std::string> seen;
  for (const auto& e : scene.vocabulary.entries) {
    if (std::find(seen.begin(), seen.end(), e.term) != seen.end()) {
      add(-1, "vocabulary: duplicate term '" + e.term + "'");
    }
    seen.push_back(e.term);
    if (static_cast<int>(e.embedding.size()) != c) {
      add(-1, "vocabulary: embedding of '" + e.term + "' has wrong dimension");
    }
  }
  return report;
}

int dominant_atom(const GaussianPrimitive& primitive) {
  const auto it = std::max_element(primitive.weights.begin(), primitive.weights.end());
  return it == primitive.weights.end() ? -1
                                       : static_cast<int>(it - primitive.weights.begin());
}

namespace {

constexpr std::array<const char*, 16> kTermNames = {
    "chair", "table", "sofa",   "lamp",   "floor",  "wall",    "bed",  "window",
    "door",  "shelf", "cabinet", "plant", "curtain", "monitor", "rug", "ceiling"};

constexpr std::array<std::array<float, 3>, 8> kPalette = {{{0.85f, 0.25f, 0.2f},
                                                          {0.2f, 0.6f, 0.85f},
                                                          {0.3f, 0.75f, 0.3f},
                                                          {0.9f, 0.75f, 0.2f},
                                                          {0.6f, 0.35f, 0.75f},
                                                          {0.95f, 0.55f, 0.25f},
                                                          {0.4f, 0.4f, 0.4f},
                                                          {0.2f, 0.8f, 0.7f}}};

std::string term_name(int r) {
  if (r < static_cast<int>(kTermNames.size())) return kTermNames[static_cast<std::size_t>(r)];
  return "region_" + std::to_string(r);
}

AtomMatrix orthonormal_atoms(std::mt19937_64& rng, int k, int c) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(c, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < c; ++i) g(i, j) = normal(rng);
  }
  Eigen::MatrixXd basis(c, k);
  const int ortho = std::min(k, c);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g.leftCols(ortho));
  basis.leftCols(ortho) = qr.householderQ() * Eigen::MatrixXd::Identity(c, ortho);
  for (int j = ortho; j < k; ++j) basis.col(j) = g.col(j).normalized();

  AtomMatrix atoms(k, c);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXf col = basis.col(j).cast<float>();
    col /= static_cast<float>(col.cast<double>().norm());
    atoms.row(j) = col.transpose();
  }
  return atoms;
}

}  // namespace

Scene make_synthetic_scene(std::uint64_t seed, std::size_t n_primitives, int k, int c,
                           int n_regions) {
  if (k < 1 || c < 1) throw InvalidArgument("make_synthetic_scene: K and C must be >= 1");
  if (n_regions < 1) throw InvalidArgument("make_synthetic_scene: need at least one region");
  if (n_regions > k) {
    throw InvalidArgument("make_synthetic_scene: regions (" + std::to_string(n_regions) +
                          ") must not exceed K (" + std::to_string(k) + ")");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene scene;
  scene.dictionary.atoms = orthonormal_atoms(rng, k, c);

  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_primitives))));
  const double spacing = side > 0 ? 2.0 / static_cast<double>(side) : 1.0;
  scene.primitives.reserve(n_primitives);
  for (std::size_t i = 0; i < n_primitives; ++i) {
    const std::size_t gx = i % side;
    const std::size_t gy = i / side;
    const int region = static_cast<int>(gx * static_cast<std::size_t>(n_regions) / side);

    GaussianPrimitive p;
    p.position = Eigen::Vector3d(-1.0 + spacing * (static_cast<double>(gx) + 0.5 + uniform(-0.2, 0.2)),
                                 -1.0 + spacing * (static_cast<double>(gy) + 0.5 + uniform(-0.2, 0.2)),
                                 spacing * uniform(-0.05, 0.05))
                     .cast<float>();
    const double theta = uniform(0.0, std::numbers::pi);
    p.rotation = Eigen::Vector4d(std::cos(0.5 * theta), 0.0, 0.0, std::sin(0.5 * theta)).cast<float>();
    p.scale = Eigen::Vector3d(spacing * uniform(0.45, 0.7), spacing * uniform(0.45, 0.7),
                              spacing * uniform(0.1, 0.3))
                  .cast<float>();
    p.opacity = static_cast<float>(uniform(0.75, 1.0));
    const auto& base = kPalette[static_cast<std::size_t>(region) % kPalette.size()];
    for (int ch = 0; ch < 3; ++ch) {
      p.color[ch] = static_cast<float>(std::clamp(base[static_cast<std::size_t>(ch)] + uniform(-0.05, 0.05), 0.0, 1.0));
    }
    p.weights.assign(static_cast<std::size_t>(k), 0.0f);
    p.weights[static_cast<std::size_t>(region)] = 1.0f;
    scene.primitives.push_back(std::move(p));
  }

  for (int r = 0; r < n_regions; ++r) {
    VocabularyEntry entry;
    entry.term = term_name(r);
    const auto row = scene.dictionary.atoms.row(r);
    entry.embedding.assign(row.data(), row.data() + c);
    scene.vocabulary.entries.push_back(std::move(entry));
  }

  scene.metadata = {{"generator", "synthetic"},
                    {"seed", std::to_string(seed)},
                    {"regions", std::to_string(n_regions)}};
  return scene;
}

Camera synthetic_camera(int width, int height, double azimuth_degrees, double elevation_degrees,
                        double distance) {
  const double az = azimuth_degrees * std::numbers::pi / 180.0;
  const double el = elevation_degrees * std::numbers::pi / 180.0;
  const Eigen::Vector3d eye(distance * std::sin(az) * std::cos(el), -distance * std::sin(el),
                            -distance * std::cos(az) * std::cos(el));
  const double fov = 2.0 * std::atan(1.2 / distance) * 180.0 / std::numbers::pi;
  return Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, -1.0, 0.0), fov,
                         width, height);
}

// ---------------------------------------------------------------------------
// LFS1 container

namespace {
constexpr std::string_view kSceneMagic = "LFS1";
constexpr std::uint32_t kSceneVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_scene(const Scene& scene) {
  const auto n = scene.primitives.size();
  const int k = scene.dictionary.k();
  const int c = scene.dictionary.c();
  for (const auto& p : scene.primitives) {
    if (static_cast<int>(p.weights.size()) != k) {
      throw InvalidArgument("save_scene: primitive weights length differs from K");
    }
  }

  ByteWriter w;
  w.raw(kSceneMagic);
  w.u32(kSceneVersion);
  w.u64(n);
  w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(scene.vocabulary.size()));

  for (const auto& p : scene.primitives) w.f32s({p.position.data(), 3});
  for (const auto& p : scene.primitives) w.f32s({p.rotation.data(), 4});
  for (const auto& p : scene.primitives) w.f32s({p.scale.data(), 3});
  for (const auto& p : scene.primitives) w.f32(p.opacity);
  for (const auto& p : scene.primitives) w.f32s({p.color.data(), 3});
  for (const auto& p : scene.primitives) w.f32s(p.weights);
  w.f32s({scene.dictionary.atoms.data(), static_cast<std::size_t>(k) * static_cast<std::size_t>(c)});

  for (const auto& e : scene.vocabulary.entries) {
    if (e.term.size() > 0xFFFF) throw InvalidArgument("save_scene: vocabulary term too long");
    if (static_cast<int>(e.embedding.size()) != c) {
      throw InvalidArgument("save_scene: vocabulary embedding dimension differs from C");
    }
    w.u16(static_cast<std::uint16_t>(e.term.size()));
    w.raw(e.term);
    w.f32s(e.embedding);
  }

  w.u32(static_cast<std::uint32_t>(scene.metadata.size()));
  for (const auto& [key, value] : scene.metadata) {
    w.u32(static_cast<std::uint32_t>(key.size()));
    w.raw(key);
    w.u32(static_cast<std::uint32_t>(value.size()));
    w.raw(value);
  }
  return w.release();
}

Scene decode_scene(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4, "magic") != kSceneMagic) {
    throw FormatError("bad magic bytes: not an LFS1 scene file");
  }
  const auto version = r.u32("header");
  if (version != kSceneVersion) {
    throw FormatError("unsupported LFS1 version " + std::to_string(version) + " (expected " +
                      std::to_string(kSceneVersion) + ")");
  }
  const auto n = r.u64("header");
  const auto k = r.u32("header");
  const auto c = r.u32("header");
  const auto vocab_count = r.u32("header");
  if (k == 0 || c == 0) {
    throw FormatError("inconsistent K/C in header (K=" + std::to_string(k) +
                      ", C=" + std::to_string(c) + ")");
  }
  // Reject absurd counts before allocating.
  const std::uint64_t fixed_floats = n * (3 + 4 + 3 + 1 + 3 + static_cast<std::uint64_t>(k)) +
                                     static_cast<std::uint64_t>(k) * c;
  if (n > (1ull << 40) || fixed_floats * 4 > r.remaining()) {
    // Pinpoint the first section that cannot be read.
    const std::array<std::pair<const char*, std::uint64_t>, 7> sections = {{
        {"positions", 3 * n},
        {"quaternions", 4 * n},
        {"scales", 3 * n},
        {"opacities", n},
        {"colors", 3 * n},
        {"weights", n * k},
        {"dictionary", static_cast<std::uint64_t>(k) * c},
    }};
    std::uint64_t offset = 0;
    for (const auto& [name, count] : sections) {
      offset += count * 4;
      if (offset > r.remaining()) {
        throw FormatError(std::string("truncated file: section '") + name + "' is shorter than expected");
      }
    }
  }

  Scene scene;
  scene.primitives.resize(n);
  for (auto& p : scene.primitives) r.f32s({p.position.data(), 3}, "positions");
  for (auto& p : scene.primitives) r.f32s({p.rotation.data(), 4}, "quaternions");
  for (auto& p : scene.primitives) r.f32s({p.scale.data(), 3}, "scales");
  for (auto& p : scene.primitives) p.opacity = r.f32("opacities");
  for (auto& p : scene.primitives) r.f32s({p.color.data(), 3}, "colors");
  for (auto& p : scene.primitives) {
    p.weights.resize(k);
    r.f32s(p.weights, "weights");
  }
  scene.dictionary.atoms.resize(k, c);
  r.f32s({scene.dictionary.atoms.data(), static_cast<std::size_t>(k) * c}, "dictionary");

  for (std::uint32_t i = 0; i < vocab_count; ++i) {
    VocabularyEntry e;
    const auto len = r.u16("vocabulary");
    e.term = r.str(len, "vocabulary");
    e.embedding.resize(c);
    r.f32s(e.embedding, "vocabulary");
    scene.vocabulary.entries.push_back(std::move(e));
  }

  const auto pairs = r.u32("metadata");
  for (std::uint32_t i = 0; i < pairs; ++i) {
    const auto klen = r.u32("metadata");
    std::string key = r.str(klen, "metadata");
    const auto vlen = r.u32("metadata");
    std::string value = r.str(vlen, "metadata");
    scene.metadata.emplace_back(std::move(key), std::move(value));
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after metadata section (" + std::to_string(r.remaining()) +
                      " bytes)");
  }
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  write_file(path, encode_scene(scene));
}

Scene load_scene(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("scene file not found: " + path.string());
  try {
    return decode_scene(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace langfield
