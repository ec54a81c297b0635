// SPDX-License-Identifier: Apache-2.0
//
// Request handling behind `langfield serve`: scene metadata, renders and text queries as JSON
// envelopes with base64 PNG payloads. Transport-free so it can be exercised without sockets.
#pragma once

#include <cstddef>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "langfield/eval.hpp"
#include "langfield/raster.hpp"
#include "langfield/scene.hpp"

namespace langfield {

/// {fx, fy, cx, cy, w2c: [16 row-major], width, height, near?, far?}
Camera camera_from_json(std::string_view text);
std::string camera_to_json(const Camera& camera);

struct ServiceOptions {
  std::size_t cache_capacity = 32;
  int threads = 0;
  double alpha_floor = kDefaultAlphaFloor;
};

struct ServiceResponse {
  int status = 200;
  std::string body;  // JSON
};

class SceneService {
 public:
  explicit SceneService(Scene scene, ServiceOptions options = {});

  ServiceResponse meta() const;
  ServiceResponse render(std::string_view body);
  ServiceResponse query(std::string_view body);

  [[nodiscard]] const Scene& scene() const { return scene_; }
  [[nodiscard]] std::size_t cache_size() const;
  [[nodiscard]] std::size_t cache_hits() const;

 private:
  struct View {
    RenderOutput<float> output;
    FeatureImage<float> features;
    std::string rgb_png_b64;
    std::string alpha_png_b64;
  };
  std::shared_ptr<const View> view_for(const Camera& camera);

  const Scene scene_;
  const ServiceOptions options_;

  mutable std::mutex mutex_;
  std::list<std::string> lru_;  // most recent first
  std::unordered_map<std::string, std::pair<std::shared_ptr<const View>, std::list<std::string>::iterator>> cache_;
  std::size_t hits_ = 0;
};

}  // namespace langfield
