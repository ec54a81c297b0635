// SPDX-License-Identifier: Apache-2.0
//
// Open-vocabulary segmentation of rendered feature images and segmentation / image metrics.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "langfield/image.hpp"
#include "langfield/scene.hpp"

namespace langfield {

inline constexpr double kDefaultAlphaFloor = 0.5;

/// Per-pixel argmax of cosine similarity over vocabulary terms (lowest index wins ties);
/// -1 where alpha < alpha_floor.
template <typename Real>
LabelImage open_vocab_segment(const Image<Real>& features, const VocabularyTable& vocab, const Image<Real>& alpha,
                              double alpha_floor = kDefaultAlphaFloor);

/// Per-pixel cosine with the term; -1 where alpha < alpha_floor.
template <typename Real>
Image<double> similarity_heatmap(const Image<Real>& features, std::span<const float> term, const Image<Real>& alpha,
                                 double alpha_floor = kDefaultAlphaFloor);

struct ClassIou {
  int label = 0;
  std::string name;
  double iou = 0.0;
};

struct MetricReport {
  double miou = 0.0;
  double accuracy = 0.0;
  std::vector<ClassIou> per_class;
  std::optional<double> psnr;
  std::optional<double> ssim;

  [[nodiscard]] std::string to_json() const;
  [[nodiscard]] std::string to_table() const;
};

/// Ignores gt = -1; IoU for each class present in gt. Throws when no pixel is valid.
MetricReport miou_accuracy(const LabelImage& pred, const LabelImage& gt, const std::vector<std::string>& names = {});

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for images in [0, 1]; 99 when MSE < 1e-10.
double psnr(const Image<float>& a, const Image<float>& b);
/// Gaussian-window SSIM (11 x 11, sigma 1.5), valid windows only, averaged over channels.
double ssim(const Image<float>& a, const Image<float>& b);

extern template LabelImage open_vocab_segment<float>(const Image<float>&, const VocabularyTable&, const Image<float>&,
                                                     double);
extern template LabelImage open_vocab_segment<double>(const Image<double>&, const VocabularyTable&,
                                                      const Image<double>&, double);
extern template Image<double> similarity_heatmap<float>(const Image<float>&, std::span<const float>,
                                                        const Image<float>&, double);
extern template Image<double> similarity_heatmap<double>(const Image<double>&, std::span<const float>,
                                                         const Image<double>&, double);

}  // namespace langfield
