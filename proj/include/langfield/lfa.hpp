// SPDX-License-Identifier: Apache-2.0
//
// Language feature aggregation: weighted pooling of a dense language map into initial atoms,
// cross-attention refinement, and the cosine alignment losses.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "langfield/autodiff.hpp"

namespace langfield {

using Matrix = Eigen::MatrixXd;

inline constexpr double kAggregateEpsilon = 1e-8;

/// d_k = sum_x w_k(x) L(x) / (sum_x w_k(x) + eps). maps is K x S, lang is S x C.
Matrix aggregate_initial(const Matrix& maps, const Matrix& lang, double epsilon = kAggregateEpsilon);

struct RefineBlock {
  Matrix wq, wk, wv, wo;  // C x C
  Matrix ffn_w1, ffn_b1;  // C x H, 1 x H
  Matrix ffn_w2, ffn_b2;  // H x C, 1 x C
};

struct RefineParams {
  std::vector<RefineBlock> blocks;
};

RefineParams zero_refine(int c, int blocks = 2, int hidden = 0);
RefineParams init_refine(int c, int blocks, int hidden, std::uint64_t seed);
std::vector<Matrix*> parameter_list(RefineParams& params);

/// Graph form; `params` follow parameter_list order.
ad::Var refine_graph(ad::Var initial, const Matrix& lang, std::span<const ad::Var> params);
Matrix refine_atoms(const Matrix& initial, const Matrix& lang, const RefineParams& params);

struct SupervisionBundle {
  Matrix gt_features;                  // K x C
  std::optional<Matrix> text;          // K x C
  std::vector<bool> text_mask;         // per atom

  /// True iff text embeddings are present and at least one atom has a label.
  [[nodiscard]] bool has_text() const;
};

/// Row-wise cosine; 0 when either row has zero norm.
Eigen::VectorXd row_cosines(const Matrix& a, const Matrix& b);

/// Per-atom weight of the GT term: max(0, cos(g, t)) for atoms with text, else 1.
Eigen::VectorXd gt_weights(const SupervisionBundle& bundle);

// Each loss optionally writes d(loss)/d(refined).
double loss_input_consistency(const Matrix& refined, const Matrix& initial, Matrix* grad = nullptr);
double loss_gt_alignment(const Matrix& refined, const SupervisionBundle& bundle, Matrix* grad = nullptr);
/// Throws InvalidArgument when the bundle has no text.
double loss_text_alignment(const Matrix& refined, const SupervisionBundle& bundle, Matrix* grad = nullptr);

struct LfaLambdas {
  double in = 1.0;
  double gt = 1.0;
  double text = 1.0;
};

struct LfaLossComponents {
  double in = 0.0;
  double gt = 0.0;
  double text = 0.0;
  double total = 0.0;
};

/// lambda_in L_in + lambda_gt L_gt + [has_text] lambda_text L_text. Rejects negative weights.
LfaLossComponents total_lfa_loss(const Matrix& refined, const Matrix& initial, const SupervisionBundle& bundle,
                                 const LfaLambdas& lambdas = {}, Matrix* grad = nullptr);

/// Graph node of total_lfa_loss with respect to `refined`; `initial` is held constant.
ad::Var lfa_loss_node(ad::Var refined, const Matrix& initial, const SupervisionBundle& bundle,
                      const LfaLambdas& lambdas = {});

}  // namespace langfield
