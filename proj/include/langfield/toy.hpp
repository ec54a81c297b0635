// SPDX-License-Identifier: Apache-2.0
//
// End-to-end toy run on a synthetic region scene: group the source view, sample per-primitive
// weights, aggregate language atoms, rebuild the field, render it and segment it.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langfield/eval.hpp"
#include "langfield/grouping.hpp"
#include "langfield/scene.hpp"

namespace langfield {

struct ToyConfig {
  std::uint64_t seed = 0;
  std::size_t primitives = 144;
  int regions = 4;
  int dictionary_k = 0;  // atoms in the source scene; 0 means one per region
  int language_dim = 16;
  int feature_dim = 64;
  int view_size = 48;
  double noise = 0.1;
  double tau_exist = kDefaultExistenceThreshold;
  double alpha_floor = kDefaultAlphaFloor;
  TrainConfig train;
};

struct ToyResult {
  double train_miou = 0.0;
  int groups_kept = 0;
  double sample_agreement = 0.0;  // primitives whose sampled argmax maps to their region
  std::size_t out_of_view = 0;
  double segment_accuracy = 0.0;  // alpha-valid pixels
  double segment_miou = 0.0;
  double factorization_deviation = 0.0;
  Scene field;  // the rebuilt semantic field
  std::vector<LossTraceRow> trace;
};

ToyResult run_toy_pipeline(const ToyConfig& config);

struct KSweepRow {
  int k = 0;
  int groups = 0;
  double miou = 0.0;
  double accuracy = 0.0;
  double deviation = 0.0;
};

/// One toy run per K with K queries.
std::vector<KSweepRow> k_sweep(const std::vector<int>& ks, const ToyConfig& base);
std::string k_sweep_table(const std::vector<KSweepRow>& rows);

}  // namespace langfield
