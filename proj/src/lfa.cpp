// SPDX-License-Identifier: Apache-2.0
#include "langfield/lfa.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "langfield/error.hpp"

namespace langfield {

Matrix aggregate_initial(const Matrix& maps, const Matrix& lang, double epsilon) {
  if (maps.cols() != lang.rows()) throw InvalidArgument("aggregate_initial: group maps and language map differ in S");
  if (!(epsilon >= 0.0)) throw InvalidArgument("aggregate_initial: epsilon must be non-negative");
  Matrix out = maps * lang;
  const Eigen::VectorXd mass = maps.rowwise().sum();
  for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) /= mass[k] + epsilon;
  return out;
}

RefineParams zero_refine(int c, int blocks, int hidden) {
  if (hidden <= 0) hidden = c;
  RefineParams p;
  for (int b = 0; b < blocks; ++b) {
    p.blocks.push_back({Matrix::Zero(c, c), Matrix::Zero(c, c), Matrix::Zero(c, c), Matrix::Zero(c, c),
                        Matrix::Zero(c, hidden), Matrix::Zero(1, hidden), Matrix::Zero(hidden, c),
                        Matrix::Zero(1, c)});
  }
  return p;
}

RefineParams init_refine(int c, int blocks, int hidden, std::uint64_t seed) {
  if (hidden <= 0) hidden = c;
  std::mt19937_64 rng(seed);
  auto gauss = [&](Eigen::Index r, Eigen::Index cols, double sd) {
    std::normal_distribution<double> g(0.0, sd);
    Matrix m(r, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
  RefineParams p = zero_refine(c, blocks, hidden);
  for (auto& b : p.blocks) {
    b.wq = gauss(c, c, s);
    b.wk = gauss(c, c, s);
    b.wv = gauss(c, c, s);
    b.wo = gauss(c, c, 0.5 * s);
    b.ffn_w1 = gauss(c, hidden, s);
    b.ffn_w2 = gauss(hidden, c, 0.5 * sh);
  }
  return p;
}

std::vector<Matrix*> parameter_list(RefineParams& params) {
  std::vector<Matrix*> out;
  for (auto& b : params.blocks) {
    for (Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2}) out.push_back(m);
  }
  return out;
}

ad::Var refine_graph(ad::Var initial, const Matrix& lang, std::span<const ad::Var> params) {
  if (params.size() % 8 != 0) throw InvalidArgument("refine_atoms: parameter count is not a whole number of blocks");
  if (initial.cols() != lang.cols()) throw InvalidArgument("refine_atoms: atoms and language features differ in C");
  ad::Tape& tape = *initial.tape();
  const ad::Var l = tape.constant(lang);
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(lang.cols()));
  ad::Var x = initial;
  for (std::size_t i = 0; i < params.size(); i += 8) {
    const auto& p = params.subspan(i, 8);
    if (p[0].rows() != lang.cols()) throw InvalidArgument("refine_atoms: block width differs from C");
    const ad::Var scores = ad::scale(ad::matmul_nt(ad::matmul(x, p[0]), ad::matmul(l, p[1])), inv_sqrt_c);
    const ad::Var att = ad::matmul(ad::softmax_rows(scores), ad::matmul(l, p[2]));
    x = ad::add(x, ad::matmul(att, p[3]));
    const ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(x, p[4]), p[5]));
    x = ad::add(x, ad::add_row(ad::matmul(hidden, p[6]), p[7]));
  }
  return x;
}

Matrix refine_atoms(const Matrix& initial, const Matrix& lang, const RefineParams& params) {
  ad::Tape tape;
  const ad::Var x = tape.constant(initial);
  std::vector<ad::Var> vars;
  for (const auto& b : params.blocks) {
    for (const Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2}) {
      vars.push_back(tape.constant(*m));
    }
  }
  return refine_graph(x, lang, vars).value();
}

bool SupervisionBundle::has_text() const {
  return text.has_value() && std::any_of(text_mask.begin(), text_mask.end(), [](bool b) { return b; });
}

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument(std::string(op) + ": shape mismatch");
}

void check_bundle(const Matrix& refined, const SupervisionBundle& bundle, const char* op) {
  check_shapes(refined, bundle.gt_features, op);
  if (bundle.text) check_shapes(refined, *bundle.text, op);
  if (!bundle.text_mask.empty() && bundle.text_mask.size() != static_cast<std::size_t>(refined.rows())) {
    throw InvalidArgument(std::string(op) + ": text mask length differs from atom count");
  }
}

bool atom_has_text(const SupervisionBundle& bundle, Eigen::Index n) {
  return bundle.text && n < static_cast<Eigen::Index>(bundle.text_mask.size()) && bundle.text_mask[n];
}

/// Cosine of one row pair and, optionally, its gradient with respect to `a`.
double cosine(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
              Eigen::RowVectorXd* grad) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (grad) grad->setZero(a.size());
    return 0.0;
  }
  const double c = a.dot(b) / (na * nb);
  if (grad) *grad = b / (na * nb) - c * a / (na * na);
  return c;
}

/// (1/N) sum_n weight_n (1 - cos(refined_n, other_n)), restricted to rows with include_n.
double weighted_cosine_loss(const Matrix& refined, const Matrix& other, const Eigen::VectorXd& weight,
                            const std::vector<bool>& include, Matrix* grad) {
  const Eigen::Index n = refined.rows();
  if (grad) grad->setZero(refined.rows(), refined.cols());
  if (n == 0) return 0.0;
  double total = 0.0;
  Eigen::RowVectorXd g;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!include[static_cast<std::size_t>(i)]) continue;
    const double c = cosine(refined.row(i), other.row(i), grad ? &g : nullptr);
    total += weight[i] * (1.0 - c);
    if (grad) grad->row(i) = -weight[i] * g / static_cast<double>(n);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Eigen::VectorXd row_cosines(const Matrix& a, const Matrix& b) {
  check_shapes(a, b, "row_cosines");
  Eigen::VectorXd out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[i] = cosine(a.row(i), b.row(i), nullptr);
  return out;
}

Eigen::VectorXd gt_weights(const SupervisionBundle& bundle) {
  const Eigen::Index n = bundle.gt_features.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (atom_has_text(bundle, i)) w[i] = std::max(0.0, cosine(bundle.gt_features.row(i), bundle.text->row(i), nullptr));
  }
  return w;
}

double loss_input_consistency(const Matrix& refined, const Matrix& initial, Matrix* grad) {
  check_shapes(refined, initial, "loss_input_consistency");
  return weighted_cosine_loss(refined, initial, Eigen::VectorXd::Ones(refined.rows()),
                              std::vector<bool>(static_cast<std::size_t>(refined.rows()), true), grad);
}

double loss_gt_alignment(const Matrix& refined, const SupervisionBundle& bundle, Matrix* grad) {
  check_bundle(refined, bundle, "loss_gt_alignment");
  return weighted_cosine_loss(refined, bundle.gt_features, gt_weights(bundle),
                              std::vector<bool>(static_cast<std::size_t>(refined.rows()), true), grad);
}

double loss_text_alignment(const Matrix& refined, const SupervisionBundle& bundle, Matrix* grad) {
  check_bundle(refined, bundle, "loss_text_alignment");
  if (!bundle.has_text()) throw InvalidArgument("loss_text_alignment: no text labels; gate on has_text()");
  std::vector<bool> include(static_cast<std::size_t>(refined.rows()));
  for (Eigen::Index i = 0; i < refined.rows(); ++i) include[i] = atom_has_text(bundle, i);
  return weighted_cosine_loss(refined, *bundle.text, Eigen::VectorXd::Ones(refined.rows()), include, grad);
}

LfaLossComponents total_lfa_loss(const Matrix& refined, const Matrix& initial, const SupervisionBundle& bundle,
                                 const LfaLambdas& lambdas, Matrix* grad) {
  if (lambdas.in < 0 || lambdas.gt < 0 || lambdas.text < 0) {
    throw InvalidArgument("total_lfa_loss: loss weights must be non-negative");
  }
  LfaLossComponents c;
  Matrix g_in, g_gt, g_text;
  c.in = loss_input_consistency(refined, initial, grad ? &g_in : nullptr);
  c.gt = loss_gt_alignment(refined, bundle, grad ? &g_gt : nullptr);
  const bool text = bundle.has_text();
  if (text) c.text = loss_text_alignment(refined, bundle, grad ? &g_text : nullptr);
  c.total = lambdas.in * c.in + lambdas.gt * c.gt + (text ? lambdas.text * c.text : 0.0);
  if (grad) {
    *grad = lambdas.in * g_in + lambdas.gt * g_gt;
    if (text) *grad += lambdas.text * g_text;
  }
  return c;
}

ad::Var lfa_loss_node(ad::Var refined, const Matrix& initial, const SupervisionBundle& bundle,
                      const LfaLambdas& lambdas) {
  Matrix grad;
  Matrix value(1, 1);
  value(0, 0) = total_lfa_loss(refined.value(), initial, bundle, lambdas, &grad).total;
  return refined.tape()->record(std::move(value), {refined}, [refined, grad](ad::Tape& t, std::size_t self) {
    t.grad_mut(refined.id()) += grad * t.grad(self)(0, 0);
  });
}

}  // namespace langfield
