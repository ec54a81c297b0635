// SPDX-License-Identifier: Apache-2.0
#include "langfield/service.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"
#include "langfield/png_io.hpp"

namespace langfield {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kMaxImageSide = 4096;

double number(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(fmt::format("camera: missing '{}'", key));
  if (!j.at(key).is_number()) throw InvalidArgument(fmt::format("camera: '{}' must be a number", key));
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw InvalidArgument(fmt::format("camera: '{}' is not finite", key));
  return v;
}

int dimension(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw InvalidArgument(fmt::format("camera: '{}' must be an integer", key));
  }
  const auto v = j.at(key).get<std::int64_t>();
  if (v < 1 || v > kMaxImageSide) {
    throw InvalidArgument(fmt::format("camera: '{}' must lie in [1, {}], got {}", key, kMaxImageSide, v));
  }
  return static_cast<int>(v);
}

Camera camera_from(const json& j) {
  if (!j.is_object()) throw InvalidArgument("camera: expected a JSON object");
  Camera c;
  c.fx = number(j, "fx");
  c.fy = number(j, "fy");
  c.cx = number(j, "cx");
  c.cy = number(j, "cy");
  if (c.fx <= 0 || c.fy <= 0) throw InvalidArgument("camera: focal lengths must be positive");
  c.width = dimension(j, "width");
  c.height = dimension(j, "height");
  if (j.contains("near")) c.near = number(j, "near");
  if (j.contains("far")) c.far = number(j, "far");
  if (!(c.near > 0 && c.far > c.near)) throw InvalidArgument("camera: need 0 < near < far");
  if (!j.contains("w2c") || !j.at("w2c").is_array() || j.at("w2c").size() != 16) {
    throw InvalidArgument("camera: 'w2c' must be an array of 16 numbers");
  }
  for (int i = 0; i < 16; ++i) {
    const auto& v = j.at("w2c")[i];
    if (!v.is_number() || !std::isfinite(v.get<double>())) throw InvalidArgument("camera: 'w2c' entries must be finite");
    c.world_to_camera(i / 4, i % 4) = v.get<double>();
  }
  return c;
}

ordered_json camera_json(const Camera& c) {
  ordered_json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["w2c"] = ordered_json::array();
  for (int i = 0; i < 16; ++i) j["w2c"].push_back(c.world_to_camera(i / 4, i % 4));
  j["width"] = c.width;
  j["height"] = c.height;
  j["near"] = c.near;
  j["far"] = c.far;
  return j;
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(fmt::format("malformed JSON: {}", e.what()));
  }
}

ServiceResponse error_response(int status, const std::string& message) {
  ordered_json j;
  j["error"] = message;
  return {status, j.dump()};
}

template <typename F>
ServiceResponse guarded(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  } catch (const FormatError& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

std::string png_b64(const std::vector<std::uint8_t>& png) { return base64_encode(png); }

}  // namespace

Camera camera_from_json(std::string_view text) { return camera_from(parse_body(text)); }

std::string camera_to_json(const Camera& camera) { return camera_json(camera).dump(); }

SceneService::SceneService(Scene scene, ServiceOptions options) : scene_(std::move(scene)), options_(options) {
  if (options_.cache_capacity == 0) throw InvalidArgument("serve: cache capacity must be positive");
}

ServiceResponse SceneService::meta() const {
  ordered_json j;
  j["k"] = scene_.dictionary.atoms.rows();
  j["c"] = scene_.dictionary.atoms.cols();
  j["n_primitives"] = scene_.primitives.size();
  j["terms"] = scene_.vocabulary.terms();
  return {200, j.dump()};
}

std::size_t SceneService::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::size_t SceneService::cache_hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::shared_ptr<const SceneService::View> SceneService::view_for(const Camera& camera) {
  const std::string key = camera_to_json(camera);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.second);
      ++hits_;
      return it->second.first;
    }
  }
  RenderOptions ro;
  ro.threads = options_.threads;
  auto view = std::make_shared<View>();
  view->output = langfield::render<float>(scene_, camera, ro);
  view->features = assemble_features(view->output.weight_maps, scene_.dictionary);
  view->rgb_png_b64 = png_b64(encode_png(to_u8(view->output.rgb)));
  view->alpha_png_b64 = png_b64(encode_png(to_u8(view->output.alpha)));

  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second.first;  // raced with another request
  lru_.push_front(key);
  cache_.emplace(key, std::make_pair(view, lru_.begin()));
  while (cache_.size() > options_.cache_capacity) {
    cache_.erase(lru_.back());
    lru_.pop_back();
  }
  return view;
}

ServiceResponse SceneService::render(std::string_view body) {
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.is_object() || !req.contains("camera")) throw InvalidArgument("render: body needs a 'camera' object");
    const Camera camera = camera_from(req.at("camera"));
    const auto view = view_for(camera);
    ordered_json j;
    j["width"] = camera.width;
    j["height"] = camera.height;
    j["rgb_png_b64"] = view->rgb_png_b64;
    j["alpha_png_b64"] = view->alpha_png_b64;
    return ServiceResponse{200, j.dump()};
  });
}

ServiceResponse SceneService::query(std::string_view body) {
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.is_object() || !req.contains("camera")) throw InvalidArgument("query: body needs a 'camera' object");
    const Camera camera = camera_from(req.at("camera"));
    const bool has_term = req.contains("term");
    const bool has_embedding = req.contains("embedding");
    if (has_term == has_embedding) throw InvalidArgument("query: give exactly one of 'term' or 'embedding'");

    const auto c = static_cast<std::size_t>(scene_.dictionary.atoms.cols());
    VocabularyTable vocab = scene_.vocabulary;
    std::vector<float> term;
    std::string label;
    if (has_term) {
      label = req.at("term").get<std::string>();
      const auto idx = vocab.find(label);
      if (!idx) {
        std::string known;
        for (const auto& t : vocab.terms()) known += (known.empty() ? "" : ", ") + t;
        throw InvalidArgument(fmt::format("query: unknown term '{}'; available: {}", label, known));
      }
      term = vocab.entries[*idx].embedding;
    } else {
      const auto& e = req.at("embedding");
      if (!e.is_array() || e.size() != c) {
        throw InvalidArgument(fmt::format("query: 'embedding' must be an array of {} numbers", c));
      }
      for (const auto& v : e) {
        if (!v.is_number()) throw InvalidArgument("query: 'embedding' entries must be numbers");
        term.push_back(v.get<float>());
      }
      label = "custom";
      vocab.entries.push_back({label, term});
    }

    const auto view = view_for(camera);
    const Image<double> heat = similarity_heatmap(view->features, term, view->output.alpha, options_.alpha_floor);
    const LabelImage labels = open_vocab_segment(view->features, vocab, view->output.alpha, options_.alpha_floor);

    Image<double> scaled(heat.width, heat.height, 1);
    double max_sim = -1.0;
    for (std::size_t i = 0; i < heat.data.size(); ++i) {
      scaled.data[i] = (heat.data[i] + 1.0) / 2.0;
      max_sim = std::max(max_sim, heat.data[i]);
    }

    ordered_json j;
    j["term"] = label;
    j["width"] = camera.width;
    j["height"] = camera.height;
    j["max_similarity"] = max_sim;
    j["heatmap_encoding"] = "gray16 (cos + 1) / 2";
    j["heatmap_png_b64"] = png_b64(encode_png(to_u16(scaled)));
    j["labels"] = vocab.terms();
    j["labels_png_b64"] = png_b64(encode_label_png(labels));
    return ServiceResponse{200, j.dump()};
  });
}

}  // namespace langfield
