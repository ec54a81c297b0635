// SPDX-License-Identifier: Apache-2.0
#include "langfield/autodiff.hpp"

#include <cmath>

#include "langfield/error.hpp"

namespace langfield::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::variable(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw InvalidArgument("autodiff: operands live on different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back({std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw InvalidArgument("autodiff: output is not on this tape");
  if (output.rows() != 1 || output.cols() != 1) throw InvalidArgument("autodiff: backward needs a scalar output");
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[output.id()].grad(0, 0) = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

namespace {

void accumulate(Tape& t, Var v, const Matrix& g) {
  if (t.requires_grad(v.id())) t.grad_mut(v.id()) += g;
}

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string("autodiff: shape mismatch in ") + op);
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw InvalidArgument("autodiff: matmul inner dimensions differ");
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g * b.value().transpose());
    accumulate(t, b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw InvalidArgument("autodiff: matmul_nt inner dimensions differ");
  return a.tape()->record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g * b.value());
    accumulate(t, b, g.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, b, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, b, -t.grad(self));
  });
}

Var hadamard(Var a, Var b) {
  same_shape(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self).cwiseProduct(b.value()));
    accumulate(t, b, t.grad(self).cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self) * s);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidArgument("autodiff: add_row needs a 1 x n row");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, row, t.grad(self).colwise().sum());
  });
}

Var tanh(Var a) {
  Matrix y = a.value().array().tanh().matrix();
  return a.tape()->record(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    accumulate(t, a, t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  Matrix y = a.value().unaryExpr([](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return a.tape()->record(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    accumulate(t, a, t.grad(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var softmax_rows(Var a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return a.tape()->record(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = y.cwiseProduct((g.colwise() - dot));
    accumulate(t, a, ga);
  });
}

Var sum(Var a) {
  Matrix s(1, 1);
  s(0, 0) = a.value().sum();
  return a.tape()->record(std::move(s), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, Matrix::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw InvalidArgument("autodiff: mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw InvalidArgument("autodiff: gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  return a.tape()->record(std::move(out), {a}, [a, rows](Tape& t, std::size_t self) {
    if (!t.requires_grad(a.id())) return;
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_mut(a.id());
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

}  // namespace langfield::ad
