// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace langfield {

struct Assignment {
  /// (row, column) pairs sorted by row; size is min(rows, cols).
  std::vector<std::pair<int, int>> pairs;
  /// Sum of the assigned costs, accumulated in row order.
  double total_cost = 0.0;
};

/// Minimum-cost rectangular assignment (shortest augmenting paths with potentials, O(n^2 m)).
/// Throws InvalidArgument on non-finite entries.
Assignment hungarian_match(const Eigen::MatrixXd& cost);

}  // namespace langfield
