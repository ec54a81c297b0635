// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "langfield/error.hpp"
#include "langfield/eval.hpp"

using namespace langfield;

namespace {

VocabularyTable vocab(const std::vector<std::vector<float>>& rows) {
  VocabularyTable v;
  for (std::size_t i = 0; i < rows.size(); ++i) v.entries.push_back({"t" + std::to_string(i), rows[i]});
  return v;
}

Image<double> random_features(std::mt19937_64& rng, int w, int h, int c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Image<double> f(w, h, c);
  for (double& v : f.data) v = g(rng);
  return f;
}

// naive per-pixel oracle: cosine via explicit sums, first maximum wins
int oracle_label(std::span<const double> f, const VocabularyTable& v) {
  int best = -1;
  double best_cos = -2.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    double dot = 0, nf = 0, nt = 0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      dot += f[j] * v.entries[k].embedding[j];
      nf += f[j] * f[j];
      nt += double(v.entries[k].embedding[j]) * v.entries[k].embedding[j];
    }
    const double c = (nf == 0 || nt == 0) ? 0.0 : dot / std::sqrt(nf * nt);
    if (c > best_cos) {
      best_cos = c;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double naive_ssim(const Image<float>& a, const Image<float>& b) {
  const int n = 11;
  double w[11][11], ws = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      ws += w[i][j];
    }
  double total = 0;
  int count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y + n <= a.height; ++y)
      for (int x = 0; x + n <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double k = w[i][j] / ws, va = a.at(x + j, y + i, c), vb = b.at(x + j, y + i, c);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cv = sab - ma * mb;
        total += ((2 * ma * mb + 1e-4) * (2 * cv + 9e-4)) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
        ++count;
      }
  return total / count;
}

}  // namespace

TEST_CASE("segmentation matches a per-pixel cosine oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 2 + trial % 6;
    auto f = random_features(rng, 9, 7, c);
    std::normal_distribution<float> g(0.f, 1.f);
    std::vector<std::vector<float>> rows(5, std::vector<float>(c));
    for (auto& r : rows)
      for (float& x : r) x = g(rng);
    const auto v = vocab(rows);
    Image<double> alpha(9, 7, 1, 1.0);
    const auto labels = open_vocab_segment(f, v, alpha);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) CHECK(labels.at(x, y) == oracle_label(f.pixel(x, y), v));
  }
}

TEST_CASE("segmentation honours the alpha floor and ties") {
  Image<double> f(2, 1, 2);
  f.at(0, 0, 0) = 1.0;
  f.at(1, 0, 1) = 1.0;
  Image<double> alpha(2, 1, 1);
  alpha.at(0, 0) = 0.5;
  alpha.at(1, 0) = 0.49;
  auto labels = open_vocab_segment(f, vocab({{1, 0}, {0, 1}}), alpha);
  CHECK(labels.at(0, 0) == 0);
  CHECK(labels.at(1, 0) == -1);

  // identical terms: lowest index wins
  alpha.at(1, 0) = 1.0;
  labels = open_vocab_segment(f, vocab({{1, 1}, {1, 1}, {2, 2}}), alpha);
  CHECK(labels.at(0, 0) == 0);
  CHECK(labels.at(1, 0) == 0);

  CHECK_THROWS_AS(open_vocab_segment(f, vocab({{1, 0, 0}}), alpha), InvalidArgument);
}

TEST_CASE("segmentation is invariant to positive feature scale") {
  std::mt19937_64 rng(9);
  auto f = random_features(rng, 6, 6, 4);
  const auto v = vocab({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 1}, {1, -1, 0, 2}});
  Image<double> alpha(6, 6, 1, 1.0);
  const auto base = open_vocab_segment(f, v, alpha);
  for (double s : {1e-3, 0.5, 7.0, 1e4}) {
    auto g = f;
    for (double& x : g.data) x *= s;
    CHECK(open_vocab_segment(g, v, alpha) == base);
  }
}

TEST_CASE("heatmap argmax reproduces segmentation") {
  std::mt19937_64 rng(21);
  auto f = random_features(rng, 8, 5, 3);
  const auto v = vocab({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}});
  Image<double> alpha(8, 5, 1, 1.0);
  alpha.at(2, 2) = 0.1;
  const auto labels = open_vocab_segment(f, v, alpha);
  std::vector<Image<double>> maps;
  for (const auto& e : v.entries) maps.push_back(similarity_heatmap(f, e.embedding, alpha));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 8; ++x) {
      if (alpha.at(x, y) < 0.5) {
        CHECK(labels.at(x, y) == -1);
        CHECK(maps[0].at(x, y) == -1.0);
        continue;
      }
      int best = 0;
      for (int k = 1; k < 4; ++k)
        if (maps[k].at(x, y) > maps[best].at(x, y)) best = k;
      CHECK(labels.at(x, y) == best);
    }
}

TEST_CASE("float and double segmentation agree on well separated data") {
  std::mt19937_64 rng(4);
  auto fd = random_features(rng, 10, 10, 3);
  Image<float> ff(10, 10, 3), af(10, 10, 1, 1.f);
  for (std::size_t i = 0; i < fd.data.size(); ++i) ff.data[i] = static_cast<float>(fd.data[i]);
  Image<double> ad(10, 10, 1, 1.0);
  const auto v = vocab({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(open_vocab_segment(ff, v, af) == open_vocab_segment(fd, v, ad));
}

TEST_CASE("mIoU and accuracy against hand counts") {
  LabelImage gt(4, 1, 1), pred(4, 1, 1);
  gt.data = {0, 0, 1, 1};
  pred.data = {0, 0, 0, 0};
  auto r = miou_accuracy(pred, gt, {"a", "b"});
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.miou == doctest::Approx(0.25));
  REQUIRE(r.per_class.size() == 2);
  CHECK(r.per_class[0].name == "a");
  CHECK(r.per_class[0].iou == doctest::Approx(0.5));
  CHECK(r.per_class[1].iou == doctest::Approx(0.0));

  // ignored pixels and classes only predicted
  gt.data = {-1, 0, 0, -1};
  pred.data = {3, 0, 2, 3};
  r = miou_accuracy(pred, gt);
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.miou == doctest::Approx(0.5));
  CHECK(r.per_class.size() == 1);

  CHECK(miou_accuracy(gt, gt).miou == 1.0);
  gt.data = {-1, -1, -1, -1};
  CHECK_THROWS_AS(miou_accuracy(pred, gt), InvalidArgument);
  CHECK_THROWS_AS(miou_accuracy(LabelImage(3, 1, 1), LabelImage(4, 1, 1)), InvalidArgument);

  const auto json = miou_accuracy(pred, pred).to_json();
  CHECK(json.find("\"miou\"") != std::string::npos);
}

TEST_CASE("PSNR") {
  Image<float> a(8, 8, 3, 0.4f), b(8, 8, 3, 0.5f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK_THROWS_AS(psnr(a, Image<float>(8, 8, 1)), InvalidArgument);
}

TEST_CASE("SSIM matches a direct windowed computation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (int trial = 0; trial < 4; ++trial) {
    Image<float> a(17 + trial, 13, 1 + trial % 3), b(17 + trial, 13, 1 + trial % 3);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      a.data[i] = u(rng);
      b.data[i] = std::clamp(a.data[i] + 0.2f * (u(rng) - 0.5f), 0.f, 1.f);
    }
    CHECK(std::abs(ssim(a, b) - naive_ssim(a, b)) < 1e-6);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ssim(Image<float>(10, 20, 1), Image<float>(10, 20, 1)), InvalidArgument);
}
