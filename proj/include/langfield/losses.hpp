// SPDX-License-Identifier: Apache-2.0
//
// Semantic-grouping losses with hand-derived gradients. Each function returns the loss value and,
// when `grad` is non-empty, writes d(loss)/d(input) into it.
#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace langfield {

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp] before taking logs.
inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over elements of -alpha_t (1 - p_t)^gamma log(p_t).
double focal_loss(std::span<const double> probs, std::span<const double> targets, double alpha,
                  double gamma, std::span<double> grad = {});

/// 1 - (2 sum(p t) + smooth) / (sum(p) + sum(t) + smooth).
double dice_loss(std::span<const double> probs, std::span<const double> targets, double smooth,
                 std::span<double> grad = {});

/// Binary cross-entropy against 1 for matched queries and 0 otherwise, averaged over queries.
double existence_loss(std::span<const double> existence, const std::vector<bool>& matched,
                      std::span<double> grad = {});

/// Squared error averaged over every element (locations x channels).
double mse_dense_loss(const Eigen::MatrixXd& field, const Eigen::MatrixXd& target,
                      Eigen::MatrixXd* grad = nullptr);

struct SgLossComponents {
  double focal = 0.0;
  double dice = 0.0;
  double exist = 0.0;
  double mse = 0.0;
};

struct SgLambdas {
  double focal = 20.0;
  double dice = 1.0;
  double exist = 1.0;
  double mse = 1.0;
};

/// Weighted sum of the four grouping terms. Throws InvalidArgument on negative weights.
double total_sg_loss(const SgLossComponents& components, const SgLambdas& lambdas);

}  // namespace langfield
