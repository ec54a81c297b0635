// SPDX-License-Identifier: Apache-2.0
#include "langfield/toy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "langfield/lfa.hpp"
#include "langfield/raster.hpp"

namespace langfield {

ToyResult run_toy_pipeline(const ToyConfig& config) {
  const int k = config.dictionary_k > 0 ? config.dictionary_k : config.regions;
  const Scene source = make_synthetic_scene(config.seed, config.primitives, k, config.language_dim, config.regions);
  const Camera view = synthetic_camera(config.view_size, config.view_size);
  const RegionSupervision sup =
      make_region_supervision(source, view, config.feature_dim, config.noise, config.seed);

  ToyResult out;
  TrainResult trained = train_toy(sup.field, sup.gt_groups, config.train);
  const GroupPrediction pred = forward_grouping(sup.field, trained.bank, trained.params);
  out.train_miou = matched_mask_miou(pred, sup.gt_groups, config.train.sg);
  out.trace = std::move(trained.trace);

  const GroupSet groups = filter_and_normalize(pred, config.tau_exist);
  out.groups_kept = groups.k();

  std::vector<Eigen::Vector3d> centres;
  for (const auto& p : source.primitives) centres.push_back(p.position.cast<double>());
  const SampledWeights sampled = sample_weights(groups, centres, CameraLocator{view, 0});
  out.out_of_view = sampled.out_of_view.size();

  // region each group mostly covers
  const Eigen::MatrixXd overlap = groups.maps * sup.gt_groups.transpose();
  std::vector<int> group_region(static_cast<std::size_t>(groups.k()));
  for (int g = 0; g < groups.k(); ++g) overlap.row(g).maxCoeff(&group_region[g]);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < source.primitives.size(); ++i) {
    const auto& w = sampled.weights[i];
    const auto g = std::max_element(w.begin(), w.end()) - w.begin();
    agree += group_region[static_cast<std::size_t>(g)] == dominant_atom(source.primitives[i]);
  }
  out.sample_agreement = static_cast<double>(agree) / static_cast<double>(source.primitives.size());

  const Eigen::MatrixXd initial = aggregate_initial(groups.maps, sup.language);
  const Eigen::MatrixXd refined = refine_atoms(initial, sup.language, zero_refine(config.language_dim));

  Scene& field = out.field;
  field.primitives = source.primitives;
  for (std::size_t i = 0; i < field.primitives.size(); ++i) field.primitives[i].weights = sampled.weights[i];
  field.dictionary.atoms = refined.rowwise().normalized().cast<float>();
  field.vocabulary = source.vocabulary;
  field.metadata = {{"generator", "toy-pipeline"}, {"seed", std::to_string(config.seed)},
                    {"regions", std::to_string(config.regions)}};

  const auto rendered = render<float>(field, view);
  const auto features = assemble_features(rendered.weight_maps, field.dictionary);
  const auto direct = render_features_direct<float>(field, view);
  for (std::size_t i = 0; i < features.data.size(); ++i) {
    out.factorization_deviation =
        std::max(out.factorization_deviation, static_cast<double>(std::abs(features.data[i] - direct.data[i])));
  }

  const LabelImage labels = open_vocab_segment(features, field.vocabulary, rendered.alpha, config.alpha_floor);
  LabelImage gt(view.width, view.height, 1, -1);
  for (std::size_t p = 0; p < gt.data.size(); ++p) {
    if (rendered.alpha.data[p] >= config.alpha_floor) gt.data[p] = sup.location_region[p];
  }
  const MetricReport report = miou_accuracy(labels, gt, field.vocabulary.terms());
  out.segment_accuracy = report.accuracy;
  out.segment_miou = report.miou;
  return out;
}

std::vector<KSweepRow> k_sweep(const std::vector<int>& ks, const ToyConfig& base) {
  std::vector<KSweepRow> rows;
  for (int k : ks) {
    ToyConfig cfg = base;
    cfg.dictionary_k = std::max(k, cfg.regions);
    cfg.train.n_queries = k;
    const ToyResult r = run_toy_pipeline(cfg);
    rows.push_back({k, r.groups_kept, r.segment_miou, r.segment_accuracy, r.factorization_deviation});
  }
  return rows;
}

std::string k_sweep_table(const std::vector<KSweepRow>& rows) {
  std::ostringstream out;
  out << fmt::format("{:>4} {:>7} {:>8} {:>8} {:>12}\n", "K", "groups", "mIoU", "Acc", "max_dev");
  for (const auto& r : rows) {
    out << fmt::format("{:>4} {:>7} {:>8.4f} {:>8.4f} {:>12.3e}\n", r.k, r.groups, r.miou, r.accuracy, r.deviation);
  }
  return out.str();
}

}  // namespace langfield
