// SPDX-License-Identifier: Apache-2.0
// Central finite differences for gradient tests.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>

#include <Eigen/Core>

namespace langfield::testing {

inline Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                          const Eigen::MatrixXd& at, double h = 1e-6) {
  Eigen::MatrixXd grad(at.rows(), at.cols());
  Eigen::MatrixXd x = at;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double up = f(x);
    x.data()[i] = orig - h;
    const double down = f(x);
    x.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max|a - n| / max(max|a|, max|n|); zero when both vanish.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max(analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>());
  const double diff = (analytic - numeric).lpNorm<Eigen::Infinity>();
  if (scale < std::numeric_limits<double>::min()) return diff;
  return diff / scale;
}

}  // namespace langfield::testing
