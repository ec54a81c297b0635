// SPDX-License-Identifier: Apache-2.0
#include "langfield/losses.hpp"

#include <algorithm>
#include <cmath>

#include "langfield/error.hpp"

namespace langfield {
namespace {

double clamp_prob(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

void check_pair(std::span<const double> probs, std::span<const double> targets, std::span<double> grad,
                const char* op) {
  if (probs.size() != targets.size()) throw InvalidArgument(std::string(op) + ": probs and targets differ in size");
  if (!grad.empty() && grad.size() != probs.size()) throw InvalidArgument(std::string(op) + ": gradient buffer size");
}

}  // namespace

double focal_loss(std::span<const double> probs, std::span<const double> targets, double alpha,
                  double gamma, std::span<double> grad) {
  check_pair(probs, targets, grad, "focal_loss");
  if (probs.empty()) return 0.0;
  const double n = static_cast<double>(probs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    const bool positive = targets[i] > 0.5;
    const double pt = positive ? p : 1.0 - p;
    const double at = positive ? alpha : 1.0 - alpha;
    const double q = 1.0 - pt;
    const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    const double logpt = std::log(pt);
    total += -at * mod * logpt;
    if (!grad.empty()) {
      // d/dpt of -at q^g log(pt) = at (g q^(g-1) log(pt) - q^g / pt)
      const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
      const double dpt = at * (dmod * logpt - mod / pt);
      grad[i] = (positive ? dpt : -dpt) / n;
    }
  }
  return total / n;
}

double dice_loss(std::span<const double> probs, std::span<const double> targets, double smooth,
                 std::span<double> grad) {
  check_pair(probs, targets, grad, "dice_loss");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    inter += probs[i] * targets[i];
    psum += probs[i];
    tsum += targets[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + tsum + smooth;
  if (!grad.empty()) {
    for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = -(2.0 * targets[i] * den - num) / (den * den);
  }
  return 1.0 - num / den;
}

double existence_loss(std::span<const double> existence, const std::vector<bool>& matched,
                      std::span<double> grad) {
  if (existence.size() != matched.size()) throw InvalidArgument("existence_loss: lengths differ");
  if (!grad.empty() && grad.size() != existence.size()) throw InvalidArgument("existence_loss: gradient buffer size");
  if (existence.empty()) return 0.0;
  const double n = static_cast<double>(existence.size());
  double total = 0.0;
  for (std::size_t i = 0; i < existence.size(); ++i) {
    const double p = clamp_prob(existence[i]);
    if (matched[i]) {
      total -= std::log(p);
      if (!grad.empty()) grad[i] = -1.0 / (p * n);
    } else {
      total -= std::log(1.0 - p);
      if (!grad.empty()) grad[i] = 1.0 / ((1.0 - p) * n);
    }
  }
  return total / n;
}

double mse_dense_loss(const Eigen::MatrixXd& field, const Eigen::MatrixXd& target, Eigen::MatrixXd* grad) {
  if (field.rows() != target.rows() || field.cols() != target.cols()) {
    throw InvalidArgument("mse_dense_loss: field and target shapes differ");
  }
  if (field.size() == 0) {
    if (grad) grad->resize(field.rows(), field.cols());
    return 0.0;
  }
  const Eigen::MatrixXd diff = field - target;
  const double n = static_cast<double>(diff.size());
  if (grad) *grad = diff * (2.0 / n);
  return diff.squaredNorm() / n;
}

double total_sg_loss(const SgLossComponents& c, const SgLambdas& l) {
  if (l.focal < 0 || l.dice < 0 || l.exist < 0 || l.mse < 0) {
    throw InvalidArgument("total_sg_loss: loss weights must be non-negative");
  }
  return l.focal * c.focal + l.dice * c.dice + l.exist * c.exist + l.mse * c.mse;
}

}  // namespace langfield
