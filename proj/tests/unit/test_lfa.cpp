// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "langfield/error.hpp"
#include "langfield/lfa.hpp"
#include "support/numdiff.hpp"

using namespace langfield;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double naive_cos(const MatrixXd& a, const MatrixXd& b, int row) {
  double dot = 0, na = 0, nb = 0;
  for (int j = 0; j < a.cols(); ++j) {
    dot += a(row, j) * b(row, j);
    na += a(row, j) * a(row, j);
    nb += b(row, j) * b(row, j);
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

SupervisionBundle random_bundle(std::mt19937_64& rng, int k, int c, bool text) {
  SupervisionBundle b;
  b.gt_features = gaussian(rng, k, c).rowwise().normalized();
  if (text) {
    b.text = MatrixXd(gaussian(rng, k, c).rowwise().normalized());
    b.text_mask.assign(k, true);
    b.text_mask[0] = false;
  }
  return b;
}

}  // namespace

TEST_CASE("aggregate initial atoms") {
  std::mt19937_64 rng(1);
  const MatrixXd maps = gaussian(rng, 3, 20).cwiseAbs();
  const MatrixXd lang = gaussian(rng, 20, 5);
  const MatrixXd got = aggregate_initial(maps, lang);
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < 5; ++c) {
      double num = 0, den = 0;
      for (int s = 0; s < 20; ++s) {
        num += maps(k, s) * lang(s, c);
        den += maps(k, s);
      }
      CHECK(std::abs(got(k, c) - num / (den + 1e-8)) <= 1e-6);
    }
  }
  // constant language map
  const MatrixXd constant = MatrixXd::Ones(20, 1) * Eigen::RowVectorXd::LinSpaced(5, 1, 5);
  const MatrixXd flat = aggregate_initial(maps, constant);
  for (int k = 0; k < 3; ++k) CHECK((flat.row(k) - constant.row(0)).cwiseAbs().maxCoeff() <= 1e-7);
  // all weight on one location
  MatrixXd spike = MatrixXd::Zero(1, 20);
  spike(0, 7) = 2.0;
  CHECK((aggregate_initial(spike, lang).row(0) - lang.row(7) * (2.0 / (2.0 + 1e-8))).norm() <= 1e-12);
  // superposition
  const MatrixXd other = gaussian(rng, 20, 5);
  const MatrixXd lhs = aggregate_initial(maps, 2.0 * lang - 3.0 * other);
  const MatrixXd rhs = 2.0 * aggregate_initial(maps, lang) - 3.0 * aggregate_initial(maps, other);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK_THROWS_AS(aggregate_initial(maps, gaussian(rng, 19, 5)), InvalidArgument);
}

TEST_CASE("refinement") {
  std::mt19937_64 rng(2);
  const MatrixXd init = gaussian(rng, 4, 8);
  const MatrixXd lang = gaussian(rng, 30, 8);
  CHECK(refine_atoms(init, lang, zero_refine(8)) == init);
  const auto params = init_refine(8, 2, 12, 5);
  const MatrixXd a = refine_atoms(init, lang, params);
  CHECK(a == refine_atoms(init, lang, init_refine(8, 2, 12, 5)));
  CHECK(a != init);
  CHECK(a.allFinite());
  CHECK_THROWS_AS(refine_atoms(gaussian(rng, 4, 7), lang, params), InvalidArgument);
}

TEST_CASE("cosine losses closed forms") {
  std::mt19937_64 rng(3);
  const MatrixXd d = gaussian(rng, 5, 6);
  CHECK(loss_input_consistency(d, d) == doctest::Approx(0.0).scale(1.0));
  CHECK(loss_input_consistency(-d, d) == doctest::Approx(2.0));
  MatrixXd zero = d;
  zero.row(2).setZero();
  CHECK(loss_input_consistency(zero, d) == doctest::Approx((1.0 + 0.0 * 4) / 5.0));

  SupervisionBundle b;
  b.gt_features = d;
  CHECK(loss_gt_alignment(d, b) == doctest::Approx(0.0).scale(1.0));

  // negatively correlated text zeroes the atom's GT term
  b.gt_features = MatrixXd::Identity(2, 3);
  b.text = MatrixXd(2, 3);
  *b.text << -0.3, std::sqrt(1 - 0.09), 0, 0, 1, 0;
  b.text_mask = {true, true};
  const Eigen::VectorXd w = gt_weights(b);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 1.0);
  MatrixXd refined = gaussian(rng, 2, 3);
  refined.row(1) = b.gt_features.row(1) * 3.0;
  CHECK(loss_gt_alignment(refined, b) == 0.0);

  // text term
  CHECK(loss_text_alignment(*b.text, b) == doctest::Approx(0.0).scale(1.0));
  MatrixXd ortho(2, 3);
  ortho << 0, 0, 1, 0, 0, 2;
  CHECK(loss_text_alignment(ortho, b) == doctest::Approx(1.0));
  SupervisionBundle none;
  none.gt_features = b.gt_features;
  CHECK_THROWS_AS(loss_text_alignment(ortho, none), InvalidArgument);
}

TEST_CASE("losses match naive oracles and are scale invariant") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 5;
    const MatrixXd r = gaussian(rng, k, 7);
    const MatrixXd i0 = gaussian(rng, k, 7);
    const auto b = random_bundle(rng, k, 7, true);
    double in = 0, gt = 0, text = 0;
    for (int n = 0; n < k; ++n) {
      in += 1 - naive_cos(r, i0, n);
      const double w = n == 0 ? 1.0 : std::max(0.0, naive_cos(b.gt_features, *b.text, n));
      gt += w * (1 - naive_cos(r, b.gt_features, n));
      if (n != 0) text += 1 - naive_cos(r, *b.text, n);
    }
    CHECK(std::abs(loss_input_consistency(r, i0) - in / k) <= 1e-7);
    CHECK(std::abs(loss_gt_alignment(r, b) - gt / k) <= 1e-7);
    CHECK(std::abs(loss_text_alignment(r, b) - text / k) <= 1e-7);

    MatrixXd scaled = r;
    scaled.row(trial % k) *= 4.5;
    CHECK(std::abs(total_lfa_loss(scaled, i0, b).total - total_lfa_loss(r, i0, b).total) <= 1e-6);
    const auto c = total_lfa_loss(r, i0, b);
    CHECK(c.in >= 0.0);
    CHECK(c.in <= 2.0);
    CHECK(c.gt <= 2.0);
  }
}

TEST_CASE("text gating") {
  std::mt19937_64 rng(5);
  const MatrixXd r = gaussian(rng, 3, 4);
  const MatrixXd i0 = gaussian(rng, 3, 4);
  auto b = random_bundle(rng, 3, 4, true);
  b.text_mask.assign(3, false);
  CHECK_FALSE(b.has_text());
  const auto base = total_lfa_loss(r, i0, b, {1, 1, 1});
  CHECK(base.text == 0.0);
  CHECK(total_lfa_loss(r, i0, b, {1, 1, 1000}).total == base.total);
  b.text = MatrixXd(gaussian(rng, 3, 4));
  CHECK(total_lfa_loss(r, i0, b, {1, 1, 7}).total == base.total);
  CHECK_THROWS_AS(total_lfa_loss(r, i0, b, {1, -1, 1}), InvalidArgument);
}

TEST_CASE("gradients through losses and refinement") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 3;
    const int c = 5;
    const MatrixXd r = gaussian(rng, k, c);
    const MatrixXd i0 = gaussian(rng, k, c);
    const auto b = random_bundle(rng, k, c, trial % 2 == 0);
    MatrixXd g;
    total_lfa_loss(r, i0, b, {0.7, 1.3, 0.9}, &g);
    const auto fd = testing::central_difference([&](const MatrixXd& x) { return total_lfa_loss(x, i0, b, {0.7, 1.3, 0.9}).total; }, r);
    CHECK(testing::relative_error(g, fd) <= 1e-4);
  }

  const MatrixXd init = gaussian(rng, 3, 6);
  const MatrixXd lang = gaussian(rng, 12, 6);
  const auto bundle = random_bundle(rng, 3, 6, true);
  auto params = init_refine(6, 2, 8, 9);
  auto targets = parameter_list(params);
  ad::Tape tape;
  const ad::Var x = tape.variable(init);
  std::vector<ad::Var> vars;
  for (MatrixXd* m : targets) vars.push_back(tape.variable(*m));
  tape.backward(lfa_loss_node(refine_graph(x, lang, vars), init, bundle));
  auto loss = [&] { return total_lfa_loss(refine_atoms(init, lang, params), init, bundle).total; };
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const MatrixXd original = *targets[i];
    const auto fd = testing::central_difference(
        [&](const MatrixXd& m) {
          *targets[i] = m;
          const double v = loss();
          *targets[i] = original;
          return v;
        },
        original);
    CAPTURE(i);
    CHECK(testing::relative_error(vars[i].grad(), fd) <= 1e-4);
  }
}
