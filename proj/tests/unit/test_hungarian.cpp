// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "langfield/error.hpp"
#include "langfield/hungarian.hpp"

using namespace langfield;

namespace {

/// Minimum over all injective maps from the smaller side into the larger one.
double brute_force(const Eigen::MatrixXd& c) {
  const bool flip = c.rows() > c.cols();
  const Eigen::MatrixXd a = flip ? Eigen::MatrixXd(c.transpose()) : c;
  std::vector<int> cols(a.cols());
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) s += a(r, cols[r]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST_CASE("matches exhaustive search on integer costs") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 7);
  std::uniform_int_distribution<int> value(-20, 50);
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::MatrixXd c(size(rng), size(rng));
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = value(rng);
    const Assignment a = hungarian_match(c);
    REQUIRE(a.pairs.size() == static_cast<std::size_t>(std::min(c.rows(), c.cols())));
    CHECK(a.total_cost == brute_force(c));
    std::vector<int> rows, cols;
    for (auto [r, col] : a.pairs) {
      rows.push_back(r);
      cols.push_back(col);
    }
    CHECK(std::is_sorted(rows.begin(), rows.end()));
    CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
    std::sort(cols.begin(), cols.end());
    CHECK(std::adjacent_find(cols.begin(), cols.end()) == cols.end());
  }
}

TEST_CASE("edge cases") {
  CHECK(hungarian_match(Eigen::MatrixXd(0, 3)).pairs.empty());
  const Eigen::MatrixXd one = Eigen::MatrixXd::Constant(1, 1, 4.0);
  CHECK(hungarian_match(one).total_cost == 4.0);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hungarian_match(bad), InvalidArgument);
  const Eigen::MatrixXd tall = (Eigen::MatrixXd(3, 1) << 5, 1, 3).finished();
  const auto a = hungarian_match(tall);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0] == std::pair<int, int>{1, 0});
}
