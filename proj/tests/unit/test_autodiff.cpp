// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "langfield/autodiff.hpp"
#include "langfield/error.hpp"
#include "support/numdiff.hpp"

using namespace langfield;
using Eigen::MatrixXd;

namespace {

using Op = std::function<ad::Var(ad::Var, ad::Var)>;

/// Checks d sum(op(a, b) .* w) / d{a, b} against finite differences.
void check_op(const Op& op, const MatrixXd& a0, const MatrixXd& b0) {
  ad::Tape probe;
  const MatrixXd shape = op(probe.constant(a0), probe.constant(b0)).value();
  const MatrixXd w = MatrixXd::Random(shape.rows(), shape.cols());
  auto eval = [&](const MatrixXd& a, const MatrixXd& b) {
    ad::Tape t;
    return op(t.constant(a), t.constant(b)).value().cwiseProduct(w).sum();
  };
  ad::Tape tape;
  const ad::Var a = tape.variable(a0);
  const ad::Var b = tape.variable(b0);
  const ad::Var wc = tape.constant(w);
  tape.backward(ad::sum(ad::hadamard(op(a, b), wc)));
  const MatrixXd fa = testing::central_difference([&](const MatrixXd& x) { return eval(x, b0); }, a0);
  const MatrixXd fb = testing::central_difference([&](const MatrixXd& x) { return eval(a0, x); }, b0);
  CHECK(testing::relative_error(a.grad(), fa) <= 1e-6);
  if (b0.size() > 0) CHECK(testing::relative_error(b.grad(), fb) <= 1e-6);
}

}  // namespace

TEST_CASE("op gradients match finite differences") {
  std::srand(7);
  const MatrixXd a = MatrixXd::Random(3, 4);
  const MatrixXd b = MatrixXd::Random(4, 5);
  const MatrixXd c = MatrixXd::Random(3, 4);
  const MatrixXd r = MatrixXd::Random(1, 4);
  const MatrixXd e = MatrixXd::Random(6, 4);
  check_op([](ad::Var x, ad::Var y) { return ad::matmul(x, y); }, a, b);
  check_op([](ad::Var x, ad::Var y) { return ad::matmul_nt(x, y); }, a, e);
  check_op([](ad::Var x, ad::Var y) { return ad::add(x, y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::sub(x, y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::hadamard(x, y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::add_row(x, y); }, a, r);
  check_op([](ad::Var x, ad::Var y) { return ad::add(ad::scale(x, -1.7), y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::add(ad::tanh(x), y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::add(ad::sigmoid(ad::scale(x, 4.0)), y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::add(ad::softmax_rows(ad::scale(x, 3.0)), y); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::add(ad::mean(x), ad::sum(y)); }, a, c);
  check_op([](ad::Var x, ad::Var y) { return ad::matmul(ad::gather_rows(x, {2, 0, 2}), y); }, a, b);
}

TEST_CASE("gradients accumulate over reuse and reset between sweeps") {
  ad::Tape t;
  const ad::Var x = t.variable(MatrixXd::Constant(1, 1, 3.0));
  const ad::Var y = ad::add(ad::hadamard(x, x), x);  // x^2 + x
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("sigmoid and softmax stay finite at extremes") {
  ad::Tape t;
  const ad::Var x = t.variable((MatrixXd(1, 3) << -800.0, 0.0, 800.0).finished());
  const ad::Var s = ad::sigmoid(x);
  CHECK(s.value().allFinite());
  CHECK(s.value()(0, 0) == doctest::Approx(0.0));
  CHECK(s.value()(0, 2) == doctest::Approx(1.0));
  const ad::Var sm = ad::softmax_rows(x);
  CHECK(sm.value().allFinite());
  CHECK(sm.value().sum() == doctest::Approx(1.0));
}

TEST_CASE("misuse is rejected") {
  ad::Tape t, u;
  const ad::Var a = t.variable(MatrixXd::Zero(2, 3));
  const ad::Var b = u.variable(MatrixXd::Zero(3, 2));
  CHECK_THROWS_AS(ad::matmul(a, b), InvalidArgument);
  CHECK_THROWS_AS(ad::matmul(a, t.variable(MatrixXd::Zero(2, 2))), InvalidArgument);
  CHECK_THROWS_AS(t.backward(a), InvalidArgument);
  CHECK_THROWS_AS(ad::gather_rows(a, {5}), InvalidArgument);
}
