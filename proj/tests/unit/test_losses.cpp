// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "langfield/error.hpp"
#include "langfield/losses.hpp"
#include "support/numdiff.hpp"

using namespace langfield;
using Eigen::MatrixXd;

namespace {

std::span<const double> view(const MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

MatrixXd random_probs(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  MatrixXd m(n, 1);
  for (int i = 0; i < n; ++i) m(i) = u(rng);
  return m;
}

MatrixXd random_targets(std::mt19937_64& rng, int n) {
  std::bernoulli_distribution b(0.4);
  MatrixXd m(n, 1);
  for (int i = 0; i < n; ++i) m(i) = b(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_CASE("focal loss closed forms") {
  const MatrixXd half = MatrixXd::Constant(1, 1, 0.5);
  const MatrixXd one = MatrixXd::Constant(1, 1, 1.0);
  CHECK(std::abs(focal_loss(view(half), view(one), 0.5, 0.0) - 0.5 * std::log(2.0)) <= 1e-9);
  // gamma = 0 reduces to alpha-weighted BCE
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd p = random_probs(rng, 13);
    const MatrixXd t = random_targets(rng, 13);
    double bce = 0.0;
    for (int i = 0; i < 13; ++i) bce -= t(i) * std::log(p(i)) + (1 - t(i)) * std::log(1 - p(i));
    bce /= 13.0;
    CHECK(focal_loss(view(p), view(t), 0.5, 0.0) == doctest::Approx(0.5 * bce).epsilon(1e-12));
  }
  // confident correct predictions are down-weighted
  const MatrixXd confident = MatrixXd::Constant(1, 1, 0.9);
  CHECK(focal_loss(view(confident), view(one), 0.25, 2.0) < focal_loss(view(confident), view(one), 0.25, 0.0));
  CHECK(focal_loss({}, {}, 0.25, 2.0) == 0.0);
}

TEST_CASE("focal loss clamps saturated probabilities") {
  const MatrixXd p = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  const MatrixXd t = (MatrixXd(2, 1) << 1.0, 0.0).finished();
  const double v = focal_loss(view(p), view(t), 0.25, 2.0);
  CHECK(std::isfinite(v));
  CHECK(v > 1.0);
}

TEST_CASE("dice loss closed forms") {
  const MatrixXd t = (MatrixXd(4, 1) << 1, 0, 1, 0).finished();
  CHECK(std::abs(dice_loss(view(t), view(t), 1.0)) <= 1e-9);
  const MatrixXd zeros = MatrixXd::Zero(4, 1);
  // disjoint: 1 - 1 / (2 + 1)
  const MatrixXd other = (MatrixXd(4, 1) << 0, 1, 0, 1).finished();
  CHECK(dice_loss(view(other), view(t), 1.0) == doctest::Approx(1.0 - 1.0 / 5.0));
  CHECK(dice_loss(view(zeros), view(zeros), 1.0) == doctest::Approx(0.0));
}

TEST_CASE("existence loss") {
  const MatrixXd e = (MatrixXd(2, 1) << 0.8, 0.3).finished();
  const double expected = -(std::log(0.8) + std::log(0.7)) / 2.0;
  CHECK(existence_loss(view(e), {true, false}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(existence_loss(view(e), {true}), InvalidArgument);
}

TEST_CASE("mse loss and weighted total") {
  const MatrixXd a = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  const MatrixXd b = MatrixXd::Zero(2, 2);
  CHECK(mse_dense_loss(a, b) == doctest::Approx(30.0 / 4.0));
  CHECK_THROWS_AS(mse_dense_loss(a, MatrixXd::Zero(1, 2)), InvalidArgument);
  SgLossComponents c{1, 2, 3, 4};
  CHECK(total_sg_loss(c, {}) == doctest::Approx(20 + 2 + 3 + 4));
  CHECK(total_sg_loss(c, {0, 0, 0, 1}) == doctest::Approx(4));
  CHECK_THROWS_AS(total_sg_loss(c, {-1, 1, 1, 1}), InvalidArgument);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 9;
    const MatrixXd p = random_probs(rng, n);
    const MatrixXd t = random_targets(rng, n);
    std::vector<bool> matched(n);
    for (int i = 0; i < n; ++i) matched[i] = t(i) > 0.5;
    const double gamma = (trial % 3 == 0) ? 0.0 : 2.0;

    MatrixXd g(n, 1);
    focal_loss(view(p), view(t), 0.25, gamma, {g.data(), static_cast<std::size_t>(n)});
    auto fd = testing::central_difference([&](const MatrixXd& x) { return focal_loss(view(x), view(t), 0.25, gamma); }, p);
    CHECK(testing::relative_error(g, fd) <= 1e-4);

    dice_loss(view(p), view(t), 1.0, {g.data(), static_cast<std::size_t>(n)});
    fd = testing::central_difference([&](const MatrixXd& x) { return dice_loss(view(x), view(t), 1.0); }, p);
    CHECK(testing::relative_error(g, fd) <= 1e-4);

    existence_loss(view(p), matched, {g.data(), static_cast<std::size_t>(n)});
    fd = testing::central_difference([&](const MatrixXd& x) { return existence_loss(view(x), matched); }, p);
    CHECK(testing::relative_error(g, fd) <= 1e-4);

    const MatrixXd field = MatrixXd::Random(n, 4);
    const MatrixXd target = MatrixXd::Random(n, 4);
    MatrixXd gm;
    mse_dense_loss(field, target, &gm);
    fd = testing::central_difference([&](const MatrixXd& x) { return mse_dense_loss(x, target); }, field);
    CHECK(testing::relative_error(gm, fd) <= 1e-4);
  }
}
