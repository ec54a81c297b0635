// SPDX-License-Identifier: Apache-2.0
//
// Toy-scale semantic grouping head: learnable queries refined by self- and cross-attention
// against a dense feature field, an MLP mask head, an existence head, and the set-prediction
// losses used to train it.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "langfield/autodiff.hpp"
#include "langfield/hungarian.hpp"
#include "langfield/losses.hpp"
#include "langfield/scene.hpp"

namespace langfield {

using Matrix = Eigen::MatrixXd;

/// 1D sinusoidal encoding of location indices 0..s-1 (s x d).
Matrix sinusoidal_positions(int s, int d);

/// Dense per-location features plus their positional encodings.
struct DenseFeatureField {
  Matrix features;   // S x d
  Matrix positions;  // S x d

  static DenseFeatureField from_features(Matrix features);
  [[nodiscard]] int locations() const { return static_cast<int>(features.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(features.cols()); }
};

struct QueryBank {
  Matrix patterns;        // N x d
  Matrix pos_embeddings;  // N x d

  [[nodiscard]] int size() const { return static_cast<int>(patterns.rows()); }
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d x d each
};

struct HeadParams {
  Matrix field_proj;  // d x d projection applied to the raw field before attention
  std::vector<AttentionWeights> self_blocks;
  std::vector<AttentionWeights> cross_blocks;
  Matrix mask_w1, mask_b1, mask_w2, mask_b2;  // d x d, 1 x d, d x d, 1 x d
  Matrix exist_w, exist_b;                    // d x 1, 1 x 1
};

/// All-zero parameters; mask logits vanish and every existence is 0.5.
HeadParams zero_head(int d, int layers);
HeadParams init_head(int d, int layers, std::uint64_t seed);
QueryBank init_queries(int n, int d, std::uint64_t seed);

/// Parameters in a fixed order (queries first). Used by the optimizer and gradient checks.
std::vector<Matrix*> parameter_list(HeadParams& head, QueryBank& bank);

struct GroupPrediction {
  Matrix mask_logits;        // N x S
  Eigen::VectorXd existence; // N, sigmoid of the existence logit
};

/// Graph nodes of one forward pass.
struct HeadGraph {
  ad::Var field;          // projected field, S x d
  ad::Var mask_logits;    // N x S
  ad::Var exist_logits;   // N x 1
};

/// Builds the forward pass on `tape`; `params` are the tape variables for parameter_list order.
HeadGraph forward_graph(ad::Tape& tape, const DenseFeatureField& field, std::span<const ad::Var> params,
                        int layers);

GroupPrediction forward_grouping(const DenseFeatureField& field, const QueryBank& bank,
                                 const HeadParams& params);

/// Surviving queries with per-location softmax over their mask logits.
struct GroupSet {
  Matrix maps;  // K x S, columns on the simplex
  std::vector<int> kept_indices;

  [[nodiscard]] int k() const { return static_cast<int>(maps.rows()); }
};

inline constexpr double kDefaultExistenceThreshold = 0.5;

/// Keeps queries with existence > tau_exist. Throws Error when no query survives.
GroupSet filter_and_normalize(const GroupPrediction& prediction, double tau_exist = kDefaultExistenceThreshold);

/// Maps a primitive centre to a location index of the dense field, if it is visible.
using Locator = std::function<std::optional<std::size_t>(const Eigen::Vector3d&)>;

/// Nearest pixel of the source view; location index = offset + y * width + x.
struct CameraLocator {
  Camera camera;
  std::size_t offset = 0;

  std::optional<std::size_t> operator()(const Eigen::Vector3d& position) const;
};

struct SampledWeights {
  std::vector<std::vector<float>> weights;
  /// Primitives that fell outside every source view and received the uniform vector.
  std::vector<std::size_t> out_of_view;
};

SampledWeights sample_weights(const GroupSet& groups, std::span<const Eigen::Vector3d> positions,
                              const Locator& locator);

struct SgConfig {
  SgLambdas lambdas;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double dice_smooth = 1.0;
};

/// Pair cost lambda_foc * focal + lambda_dice * dice - existence for every (query, group).
Matrix matching_cost(const Matrix& mask_probs, const Eigen::VectorXd& existence, const Matrix& gt_masks,
                     const SgConfig& config);

struct MatchResult {
  Assignment assignment;     // (query, gt group)
  std::vector<bool> matched; // per query
};

MatchResult match_predictions(const Matrix& mask_probs, const Eigen::VectorXd& existence,
                              const Matrix& gt_masks, const SgConfig& config);

// Graph versions of the losses; values and gradients come from losses.hpp.
ad::Var focal_loss_node(ad::Var probs, const Matrix& targets, double alpha, double gamma);
ad::Var dice_loss_node(ad::Var probs, const Matrix& targets, double smooth);  // mean over rows
ad::Var existence_loss_node(ad::Var existence, const std::vector<bool>& matched);
ad::Var mse_loss_node(ad::Var field, const Matrix& target);

struct SgLossGraph {
  ad::Var total;
  SgLossComponents components;
};

/// Full grouping loss for a fixed matching.
SgLossGraph sg_loss_graph(const HeadGraph& graph, const Matrix& gt_masks, const MatchResult& match,
                          const Matrix& mse_target, const SgConfig& config);

struct TrainConfig {
  int steps = 500;
  double learning_rate = 1e-2;
  double clip_norm = 10.0;
  int n_queries = 8;
  int layers = 2;
  std::uint64_t seed = 0;
  SgConfig sg;
  /// Dense target for the MSE term; defaults to the raw field features.
  std::optional<Matrix> mse_target;
};

struct LossTraceRow {
  int step = 0;
  SgLossComponents components;
  double total = 0.0;
};

struct TrainResult {
  HeadParams params;
  QueryBank bank;
  std::vector<LossTraceRow> trace;
};

/// Gradient descent with Hungarian re-matching every step. Throws Error if the loss turns NaN.
TrainResult train_toy(const DenseFeatureField& field, const Matrix& gt_groups, const TrainConfig& config);
TrainResult train_toy(const DenseFeatureField& field, const Matrix& gt_groups, const TrainConfig& config,
                      HeadParams params, QueryBank bank);

/// CSV with header step,L_focal,L_dice,L_exist,L_MSE,total.
std::string loss_trace_csv(const std::vector<LossTraceRow>& trace);

/// Mean IoU between each ground-truth group and its matched query's mask (prob > 0.5).
double matched_mask_miou(const GroupPrediction& prediction, const Matrix& gt_groups, const SgConfig& config = {});

/// Synthetic supervision for a synthetic scene seen from one source view.
struct RegionSupervision {
  Camera source;
  DenseFeatureField field;            // S = width * height of the source view
  Matrix gt_groups;                   // regions x S binary masks
  std::vector<int> location_region;   // -1 where nothing is rendered
  Matrix language;                    // S x C language features around the region atoms
};

RegionSupervision make_region_supervision(const Scene& scene, const Camera& source, int feature_dim,
                                          double noise, std::uint64_t seed);

}  // namespace langfield
