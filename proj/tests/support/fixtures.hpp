// SPDX-License-Identifier: Apache-2.0
// Shared random generators for tests. Independent of the library's synthetic generators.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "langfield/scene.hpp"

namespace langfield::testing {

/// Scene with random positions in front of synthetic_camera, random rotations, dense random
/// simplex weights and non-orthogonal unit atoms.
inline Scene random_scene(std::uint64_t seed, std::size_t n, int k, int c) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Scene s;
  s.dictionary.atoms.resize(k, c);
  for (int a = 0; a < k; ++a) {
    Eigen::VectorXd v(c);
    for (int i = 0; i < c; ++i) v[i] = g(rng);
    Eigen::VectorXf f = v.normalized().cast<float>();
    f /= static_cast<float>(f.cast<double>().norm());
    s.dictionary.atoms.row(a) = f.transpose();
  }
  for (std::size_t i = 0; i < n; ++i) {
    GaussianPrimitive p;
    p.position = Eigen::Vector3f(static_cast<float>(2.4 * u(rng) - 1.2), static_cast<float>(2.4 * u(rng) - 1.2),
                                 static_cast<float>(1.5 * u(rng) - 0.75));
    Eigen::Vector4d q(g(rng), g(rng), g(rng), g(rng));
    p.rotation = q.normalized().cast<float>();
    for (int j = 0; j < 3; ++j) p.scale[j] = static_cast<float>(0.02 + 0.12 * u(rng));
    p.opacity = static_cast<float>(0.05 + 0.95 * u(rng));
    for (int j = 0; j < 3; ++j) p.color[j] = static_cast<float>(u(rng));
    std::vector<double> w(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& x : w) {
      x = -std::log(1.0 - u(rng));  // Dirichlet(1) via exponentials
      sum += x;
    }
    p.weights.resize(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a) p.weights[a] = static_cast<float>(w[a] / sum);
    s.primitives.push_back(std::move(p));
  }
  return s;
}

/// Random camera orbiting the origin at distance 2.5 to 4.
inline Camera random_camera(std::mt19937_64& rng, int width, int height) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return synthetic_camera(width, height, -40.0 + 80.0 * u(rng), -30.0 + 60.0 * u(rng), 2.5 + 1.5 * u(rng));
}

/// Single primitive helper.
inline GaussianPrimitive primitive_at(const Eigen::Vector3f& position, float sigma, float opacity,
                                      std::vector<float> weights) {
  GaussianPrimitive p;
  p.position = position;
  p.scale = Eigen::Vector3f::Constant(sigma);
  p.opacity = opacity;
  p.color = Eigen::Vector3f(0.5f, 0.5f, 0.5f);
  p.weights = std::move(weights);
  return p;
}

inline SemanticDictionary identity_dictionary(int k, int c) {
  SemanticDictionary d;
  d.atoms = AtomMatrix::Zero(k, c);
  for (int a = 0; a < k; ++a) d.atoms(a, a % c) = 1.0f;
  return d;
}

}  // namespace langfield::testing
