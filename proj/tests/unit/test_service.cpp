// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <json.hpp>
#include <thread>

#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"
#include "langfield/png_io.hpp"
#include "langfield/service.hpp"
#include "support/stripes.hpp"

using namespace langfield;
using nlohmann::json;

namespace {

const Scene& scene() {
  static const Scene s = make_synthetic_scene(3, 900, 6, 12, 4);
  return s;
}

std::string body_for(const Camera& cam, const std::string& extra = "") {
  return "{\"camera\":" + camera_to_json(cam) + extra + "}";
}

DecodedPng png_field(const json& j, const char* key) {
  return decode_png(base64_decode(j.at(key).get<std::string>()));
}

}  // namespace

TEST_CASE("camera JSON round trip and validation") {
  const Camera cam = synthetic_camera(40, 30, 20, 10, 2.5);
  const Camera back = camera_from_json(camera_to_json(cam));
  CHECK(back == cam);

  CHECK_THROWS_AS(camera_from_json("{"), InvalidArgument);
  CHECK_THROWS_AS(camera_from_json("[]"), InvalidArgument);
  json j = json::parse(camera_to_json(cam));
  j.erase("fx");
  CHECK_THROWS_AS(camera_from_json(j.dump()), InvalidArgument);
  j = json::parse(camera_to_json(cam));
  j["w2c"].erase(0);
  CHECK_THROWS_AS(camera_from_json(j.dump()), InvalidArgument);
  j = json::parse(camera_to_json(cam));
  j["width"] = 0;
  CHECK_THROWS_AS(camera_from_json(j.dump()), InvalidArgument);
  j = json::parse(camera_to_json(cam));
  j["near"] = 5.0;
  j["far"] = 1.0;
  CHECK_THROWS_AS(camera_from_json(j.dump()), InvalidArgument);
  j = json::parse(camera_to_json(cam));
  j.erase("near");
  j.erase("far");
  CHECK(camera_from_json(j.dump()).near == Camera{}.near);
}

TEST_CASE("meta lists dictionary shape and terms") {
  SceneService service(scene());
  const auto r = service.meta();
  CHECK(r.status == 200);
  const json j = json::parse(r.body);
  CHECK(j.at("k") == 6);
  CHECK(j.at("c") == 12);
  CHECK(j.at("n_primitives") == 900);
  CHECK(j.at("terms").size() == 4);
}

TEST_CASE("render returns PNGs of the camera size and caches views") {
  SceneService service(scene(), ServiceOptions{2, 1, kDefaultAlphaFloor});
  const Camera cam = synthetic_camera(48, 32);
  const auto a = service.render(body_for(cam));
  REQUIRE(a.status == 200);
  const json j = json::parse(a.body);
  const auto rgb = png_field(j, "rgb_png_b64");
  CHECK(rgb.pixels.width == 48);
  CHECK(rgb.pixels.height == 32);
  CHECK(rgb.pixels.channels == 3);
  const auto alpha = png_field(j, "alpha_png_b64");
  CHECK(alpha.pixels.channels == 1);
  bool covered = false;
  for (auto v : alpha.pixels.data) covered = covered || v > 0;
  CHECK(covered);

  CHECK(service.render(body_for(cam)).body == a.body);
  CHECK(service.cache_hits() == 1);
  for (int az = 1; az <= 4; ++az) service.render(body_for(synthetic_camera(48, 32, az * 5.0)));
  CHECK(service.cache_size() == 2);

  // identical across services and thread counts
  SceneService other(scene(), ServiceOptions{4, 4, kDefaultAlphaFloor});
  CHECK(other.render(body_for(cam)).body == a.body);
}

TEST_CASE("query heatmaps follow the region stripes") {
  SceneService service(scene());
  const Camera cam = synthetic_camera(64, 64);
  const auto truth = testing::stripe_regions(cam, 900, 4);
  const auto terms = scene().vocabulary.terms();
  for (int r = 0; r < 4; ++r) {
    const auto res = service.query(body_for(cam, ",\"term\":\"" + terms[r] + "\""));
    REQUIRE(res.status == 200);
    const json j = json::parse(res.body);
    CHECK(j.at("max_similarity").get<double>() <= 1.0);
    CHECK(j.at("max_similarity").get<double>() > 0.99);
    const auto heat = png_field(j, "heatmap_png_b64");
    CHECK(heat.bit_depth == 16);
    std::size_t inside = 0, hot = 0;
    for (std::size_t i = 0; i < heat.pixels.data.size(); ++i) {
      const double cos = heat.pixels.data[i] / 65535.0 * 2.0 - 1.0;
      if (cos < 0.9 || truth.data[i] < 0) continue;
      ++hot;
      inside += truth.data[i] == r ? 1 : 0;
    }
    CAPTURE(r);
    REQUIRE(hot > 0);
    CHECK(static_cast<double>(inside) / hot >= 0.95);

    const auto labels = png_field(j, "labels_png_b64");
    std::size_t agree = 0, valid = 0;
    for (std::size_t i = 0; i < labels.pixels.data.size(); ++i) {
      if (truth.data[i] < 0) continue;
      ++valid;
      agree += static_cast<int>(labels.pixels.data[i]) == truth.data[i] ? 1 : 0;
    }
    CHECK(static_cast<double>(agree) / valid >= 0.95);
  }
}

TEST_CASE("query by embedding matches the vocabulary term") {
  SceneService service(scene());
  const Camera cam = synthetic_camera(32, 32);
  const auto& e = scene().vocabulary.entries[2];
  const auto by_term = json::parse(service.query(body_for(cam, ",\"term\":\"" + e.term + "\"")).body);
  const auto by_vec = json::parse(service.query(body_for(cam, ",\"embedding\":" + json(e.embedding).dump())).body);
  CHECK(by_term.at("heatmap_png_b64") == by_vec.at("heatmap_png_b64"));
  CHECK(by_term.at("max_similarity") == by_vec.at("max_similarity"));
  CHECK(by_vec.at("labels").back() == "custom");
  // the appended duplicate never wins a tie, so the label images agree
  CHECK(by_term.at("labels_png_b64") == by_vec.at("labels_png_b64"));
}

TEST_CASE("malformed requests get 400 with a JSON error") {
  SceneService service(scene());
  const Camera cam = synthetic_camera(16, 16);
  for (const std::string& body :
       {std::string("{nope"), std::string("{}"), std::string("[1,2]"), body_for(cam), body_for(cam, ",\"term\":\"zebra\""),
        body_for(cam, ",\"term\":3"), body_for(cam, ",\"embedding\":[1,2]"),
        body_for(cam, ",\"term\":\"" + scene().vocabulary.entries[0].term + "\",\"embedding\":[]")}) {
    const auto r = service.query(body);
    CAPTURE(body);
    CHECK(r.status == 400);
    CHECK(json::parse(r.body).contains("error"));
  }
  const auto unknown = service.query(body_for(cam, ",\"term\":\"zebra\""));
  CHECK(unknown.body.find(scene().vocabulary.entries[0].term) != std::string::npos);
  CHECK(service.render("{\"camera\":{\"fx\":1}}").status == 400);
}

TEST_CASE("concurrent requests see identical bytes") {
  SceneService service(scene(), ServiceOptions{3, 1, kDefaultAlphaFloor});
  const std::string body = body_for(synthetic_camera(40, 40, 15.0), ",\"term\":\"" + scene().vocabulary.entries[1].term + "\"");
  const std::string expected = SceneService(scene()).query(body).body;
  std::vector<std::string> got(8);
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < 8; ++i) {
      pool.emplace_back([&, i] {
        got[i] = i % 2 ? service.query(body).body
                       : service.render(body_for(synthetic_camera(40, 40, 5.0 * i))).body;
        if (i % 2 == 0) got[i] = service.query(body).body;
      });
    }
  }
  for (const auto& g : got) CHECK(g == expected);
}
