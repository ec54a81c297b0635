// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <set>

#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"
#include "langfield/scene.hpp"
#include "support/fixtures.hpp"

using namespace langfield;

namespace {

Scene one_primitive_scene() {
  Scene s;
  s.dictionary = testing::identity_dictionary(1, 4);
  s.primitives.push_back(testing::primitive_at({0, 0, 0}, 0.1f, 0.5f, {1.0f}));
  return s;
}

bool has_issue(const ValidationReport& r, std::int64_t index, const std::string& needle) {
  for (const auto& issue : r) {
    if (issue.primitive == index && issue.invariant.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate_scene accepts a minimal valid scene") {
  CHECK(validate_scene(one_primitive_scene()).empty());
}

TEST_CASE("validate_scene reports each broken invariant") {
  auto s = one_primitive_scene();
  s.dictionary = testing::identity_dictionary(2, 4);
  s.primitives[0].weights = {0.6f, 0.3f};
  auto report = validate_scene(s);
  REQUIRE(report.size() == 1);
  CHECK(has_issue(report, 0, "simplex"));

  s.primitives[0].weights = {1.2f, -0.2f};
  CHECK(has_issue(validate_scene(s), 0, "negative"));

  s = one_primitive_scene();
  s.primitives[0].rotation = {1.0f, 0.1f, 0.0f, 0.0f};
  s.primitives[0].scale[1] = 0.0f;
  s.primitives[0].opacity = 1.5f;
  s.primitives[0].color[2] = -0.1f;
  report = validate_scene(s);
  CHECK(has_issue(report, 0, "quaternion"));
  CHECK(has_issue(report, 0, "scale"));
  CHECK(has_issue(report, 0, "opacity"));
  CHECK(has_issue(report, 0, "color"));

  s = one_primitive_scene();
  s.dictionary.atoms(0, 0) = 2.0f;
  CHECK(has_issue(validate_scene(s), -1, "unit norm"));

  s = one_primitive_scene();
  s.primitives[0].weights = {0.5f, 0.5f};
  CHECK(has_issue(validate_scene(s), 0, "length"));

  s = one_primitive_scene();
  s.vocabulary.entries = {{"a", {1, 0, 0, 0}}, {"a", {0, 1, 0, 0}}, {"b", {1, 0}}};
  report = validate_scene(s);
  CHECK(has_issue(report, -1, "duplicate"));
  CHECK(has_issue(report, -1, "dimension"));
}

TEST_CASE("make_synthetic_scene follows its construction contract") {
  const auto s = make_synthetic_scene(1, 100, 4, 16, 4);
  CHECK(s.primitives.size() == 100);
  CHECK(s.dictionary.k() == 4);
  CHECK(s.dictionary.c() == 16);
  CHECK(s.vocabulary.size() == 4);
  CHECK(validate_scene(s).empty());

  const Eigen::MatrixXd gram = s.dictionary.atoms.cast<double>() * s.dictionary.atoms.cast<double>().transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);

  std::set<int> regions;
  for (const auto& p : s.primitives) {
    int nonzero = 0;
    for (float w : p.weights) nonzero += w != 0.0f;
    CHECK(nonzero == 1);
    regions.insert(dominant_atom(p));
  }
  CHECK(regions.size() == 4);
  for (int r = 0; r < 4; ++r) {
    const auto& e = s.vocabulary.entries[r].embedding;
    for (int c = 0; c < 16; ++c) CHECK(e[c] == s.dictionary.atoms(r, c));
  }
}

TEST_CASE("make_synthetic_scene is byte-deterministic") {
  CHECK(encode_scene(make_synthetic_scene(1, 100, 4, 16, 4)) == encode_scene(make_synthetic_scene(1, 100, 4, 16, 4)));
  CHECK(encode_scene(make_synthetic_scene(1, 100, 4, 16, 4)) != encode_scene(make_synthetic_scene(2, 100, 4, 16, 4)));
}

TEST_CASE("make_synthetic_scene rejects more regions than atoms") {
  CHECK_THROWS_AS(make_synthetic_scene(1, 100, 4, 16, 9), InvalidArgument);
}

TEST_CASE("synthetic scenes validate clean over many seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int k = 1 + static_cast<int>(seed % 8);
    const int regions = 1 + static_cast<int>(seed % static_cast<std::uint64_t>(k));
    CHECK(validate_scene(make_synthetic_scene(seed, 64 + seed, k, 8 + static_cast<int>(seed % 9), regions)).empty());
  }
  CHECK(validate_scene(make_synthetic_scene(2, 1000, 8, 32, 8)).empty());
}

TEST_CASE("LFS1 round trip is bit exact (property over random scenes)") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto s = testing::random_scene(seed, 10 * seed, 1 + seed % 6, 2 + seed % 7);
    s.vocabulary.entries.push_back({"term \xC3\xA9", std::vector<float>(s.dictionary.c(), 0.25f)});
    s.metadata = {{"k", "v"}, {"empty", ""}};
    const auto bytes = encode_scene(s);
    const auto back = decode_scene(bytes);
    CHECK(encode_scene(back) == bytes);
    REQUIRE(back.primitives.size() == s.primitives.size());
    for (std::size_t i = 0; i < s.primitives.size(); ++i) {
      CHECK(back.primitives[i].position == s.primitives[i].position);
      CHECK(back.primitives[i].weights == s.primitives[i].weights);
    }
    CHECK(back.dictionary.atoms == s.dictionary.atoms);
    CHECK(back.vocabulary.entries == s.vocabulary.entries);
    CHECK(back.metadata == s.metadata);
  }
}

TEST_CASE("save_scene and load_scene use the filesystem") {
  const auto path = std::filesystem::temp_directory_path() / "langfield_test_scene.lfs";
  const auto s = make_synthetic_scene(3, 50, 4, 8, 2);
  save_scene(s, path);
  CHECK(encode_scene(load_scene(path)) == encode_scene(s));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_scene(path), Error);
}

TEST_CASE("LFS1 decoder diagnostics") {
  const auto s = make_synthetic_scene(1, 10, 4, 8, 4);
  auto bytes = encode_scene(s);

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_scene(bytes), doctest::Contains("magic"), FormatError);
  }
  SUBCASE("version mismatch") {
    bytes[4] = 2;
    CHECK_THROWS_WITH_AS(decode_scene(bytes), doctest::Contains("version"), FormatError);
  }
  SUBCASE("weights section shorter than n*K") {
    const std::size_t header = 4 + 4 + 8 + 4 + 4 + 4;
    const std::size_t weights_start = header + 10 * (3 + 4 + 3 + 1 + 3) * 4;
    bytes.resize(weights_start + 10 * 4 * 4 - 8);
    CHECK_THROWS_WITH_AS(decode_scene(bytes), doctest::Contains("weights"), FormatError);
  }
  SUBCASE("inconsistent K") {
    bytes[16] = 0;
    CHECK_THROWS_WITH_AS(decode_scene(bytes), doctest::Contains("K/C"), FormatError);
  }
  SUBCASE("trailing garbage") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_scene(bytes), FormatError);
  }
}

TEST_CASE("base64 round trip") {
  for (std::size_t n = 0; n < 10; ++n) {
    std::vector<std::uint8_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 37 + 11);
    CHECK(base64_decode(base64_encode(v)) == v);
  }
  const std::string hello = "hello";
  CHECK(base64_encode({reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size()}) == "aGVsbG8=");
}
