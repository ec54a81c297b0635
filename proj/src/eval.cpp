// SPDX-License-Identifier: Apache-2.0
#include "langfield/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "langfield/error.hpp"

namespace langfield {

namespace {

template <typename Real>
void check_feature_inputs(const Image<Real>& features, const Image<Real>& alpha, std::size_t c, const char* op) {
  if (alpha.width != features.width || alpha.height != features.height || alpha.channels != 1) {
    throw InvalidArgument(std::string(op) + ": alpha image does not match the feature image");
  }
  if (static_cast<std::size_t>(features.channels) != c) {
    throw InvalidArgument(fmt::format("{}: features have {} channels, terms have {}", op, features.channels, c));
  }
}

/// Shared by segmentation and heatmaps so their argmax agrees exactly.
template <typename Real>
double cosine(std::span<const Real> f, std::span<const float> t, double t_norm) {
  double dot = 0.0, ff = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    dot += static_cast<double>(f[i]) * static_cast<double>(t[i]);
    ff += static_cast<double>(f[i]) * static_cast<double>(f[i]);
  }
  if (ff == 0.0 || t_norm == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(ff) * t_norm), -1.0, 1.0);
}

double norm(std::span<const float> t) {
  double s = 0.0;
  for (float v : t) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

}  // namespace

template <typename Real>
LabelImage open_vocab_segment(const Image<Real>& features, const VocabularyTable& vocab, const Image<Real>& alpha,
                              double alpha_floor) {
  if (vocab.empty()) throw InvalidArgument("open_vocab_segment: empty vocabulary");
  check_feature_inputs(features, alpha, vocab.entries[0].embedding.size(), "open_vocab_segment");
  std::vector<double> norms;
  for (const auto& e : vocab.entries) {
    if (e.embedding.size() != vocab.entries[0].embedding.size()) {
      throw InvalidArgument("open_vocab_segment: vocabulary embeddings differ in length");
    }
    norms.push_back(norm(e.embedding));
  }
  LabelImage out(features.width, features.height, 1, -1);
  for (std::size_t p = 0; p < features.pixel_count(); ++p) {
    if (!(alpha.data[p] >= alpha_floor)) continue;
    const auto f = features.pixel(p);
    int best = 0;
    double best_cos = -2.0;
    for (std::size_t t = 0; t < vocab.size(); ++t) {
      const double c = cosine<Real>(f, vocab.entries[t].embedding, norms[t]);
      if (c > best_cos) {
        best_cos = c;
        best = static_cast<int>(t);
      }
    }
    out.data[p] = best;
  }
  return out;
}

template <typename Real>
Image<double> similarity_heatmap(const Image<Real>& features, std::span<const float> term, const Image<Real>& alpha,
                                 double alpha_floor) {
  check_feature_inputs(features, alpha, term.size(), "similarity_heatmap");
  const double n = norm(term);
  if (n == 0.0) throw InvalidArgument("similarity_heatmap: zero term embedding");
  Image<double> out(features.width, features.height, 1, -1.0);
  for (std::size_t p = 0; p < features.pixel_count(); ++p) {
    if (alpha.data[p] >= alpha_floor) out.data[p] = cosine<Real>(features.pixel(p), term, n);
  }
  return out;
}

template LabelImage open_vocab_segment<float>(const Image<float>&, const VocabularyTable&, const Image<float>&, double);
template LabelImage open_vocab_segment<double>(const Image<double>&, const VocabularyTable&, const Image<double>&,
                                               double);
template Image<double> similarity_heatmap<float>(const Image<float>&, std::span<const float>, const Image<float>&,
                                                 double);
template Image<double> similarity_heatmap<double>(const Image<double>&, std::span<const float>, const Image<double>&,
                                                  double);

MetricReport miou_accuracy(const LabelImage& pred, const LabelImage& gt, const std::vector<std::string>& names) {
  if (pred.width != gt.width || pred.height != gt.height || pred.channels != 1 || gt.channels != 1) {
    throw InvalidArgument(fmt::format("miou_accuracy: label images differ in size ({}x{} vs {}x{})", pred.width,
                                      pred.height, gt.width, gt.height));
  }
  std::map<int, std::size_t> inter, gt_count, pred_count;
  std::size_t valid = 0, correct = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const int g = gt.data[i];
    if (g < 0) continue;
    const int p = pred.data[i];
    ++valid;
    ++gt_count[g];
    ++pred_count[p];
    if (p == g) {
      ++correct;
      ++inter[g];
    }
  }
  if (valid == 0) throw InvalidArgument("miou_accuracy: ground truth has no valid pixels");
  MetricReport r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(valid);
  double sum = 0.0;
  for (const auto& [label, count] : gt_count) {
    const std::size_t i = inter[label];
    const std::size_t u = count + pred_count[label] - i;
    const double iou = static_cast<double>(i) / static_cast<double>(u);
    const std::string name = label < static_cast<int>(names.size()) ? names[label] : std::to_string(label);
    r.per_class.push_back({label, name, iou});
    sum += iou;
  }
  r.miou = sum / static_cast<double>(gt_count.size());
  return r;
}

namespace {

void check_images(const Image<float>& a, const Image<float>& b, const char* op) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw InvalidArgument(fmt::format("{}: image sizes differ ({}x{}x{} vs {}x{}x{})", op, a.width, a.height,
                                      a.channels, b.width, b.height, b.channels));
  }
}

}  // namespace

double psnr(const Image<float>& a, const Image<float>& b) {
  check_images(a, b, "psnr");
  if (a.data.empty()) throw InvalidArgument("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image<float>& a, const Image<float>& b) {
  check_images(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  if (a.width < kWin || a.height < kWin) throw InvalidArgument("ssim: images must be at least 11x11");
  std::array<double, kWin> g{};
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;

  const int ow = a.width - kWin + 1;
  const int oh = a.height - kWin + 1;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    // separable filtering: rows then columns, for x, y, x^2, y^2, xy
    std::array<std::vector<double>, 5> rows;
    for (auto& r : rows) r.assign(static_cast<std::size_t>(ow) * a.height, 0.0);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kWin; ++k) {
          const double va = a.at(x + k, y, c);
          const double vb = b.at(x + k, y, c);
          s[0] += g[k] * va;
          s[1] += g[k] * vb;
          s[2] += g[k] * va * va;
          s[3] += g[k] * vb * vb;
          s[4] += g[k] * va * vb;
        }
        for (int m = 0; m < 5; ++m) rows[m][static_cast<std::size_t>(y) * ow + x] = s[m];
      }
    }
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < kWin; ++k) {
          for (int m = 0; m < 5; ++m) s[m] += g[k] * rows[m][static_cast<std::size_t>(y + k) * ow + x];
        }
        const double mu_a = s[0], mu_b = s[1];
        const double var_a = s[2] - mu_a * mu_a;
        const double var_b = s[3] - mu_b * mu_b;
        const double cov = s[4] - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    }
  }
  return total / (static_cast<double>(ow) * oh * a.channels);
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["miou"] = miou;
  j["accuracy"] = accuracy;
  j["per_class_iou"] = nlohmann::ordered_json::array();
  for (const auto& c : per_class) j["per_class_iou"].push_back({{"label", c.label}, {"name", c.name}, {"iou", c.iou}});
  if (psnr) j["psnr"] = *psnr;
  if (ssim) j["ssim"] = *ssim;
  return j.dump(2);
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  out << fmt::format("{:<20}{:>10.4f}\n", "mIoU", miou);
  out << fmt::format("{:<20}{:>10.4f}\n", "accuracy", accuracy);
  if (psnr) out << fmt::format("{:<20}{:>10.4f}\n", "PSNR (dB)", *psnr);
  if (ssim) out << fmt::format("{:<20}{:>10.4f}\n", "SSIM", *ssim);
  for (const auto& c : per_class) out << fmt::format("  {:<18}{:>10.4f}\n", c.name, c.iou);
  return out.str();
}

}  // namespace langfield
