// SPDX-License-Identifier: Apache-2.0
#include "langfield/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "langfield/error.hpp"
#include "langfield/grouping.hpp"
#include "langfield/lfa.hpp"
#include "langfield/losses.hpp"

namespace langfield {

namespace {

using Eigen::MatrixXd;

MatrixXd central_difference(const std::function<double(const MatrixXd&)>& f, const MatrixXd& at, double h) {
  MatrixXd grad(at.rows(), at.cols());
  MatrixXd x = at;
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

double relative_error(const MatrixXd& analytic, const MatrixXd& numeric) {
  const double scale = std::max(analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>());
  const double diff = (analytic - numeric).lpNorm<Eigen::Infinity>();
  if (scale < std::numeric_limits<double>::min()) return diff;
  return diff / scale;
}

struct Context {
  const GradcheckOptions& options;
  std::mt19937_64 rng;

  MatrixXd gaussian(int r, int c) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  }
  MatrixXd uniform(int r, int c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  }
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  // compares one analytic gradient against central differences of f
  double compare(MatrixXd analytic, const MatrixXd& at, const std::function<double(const MatrixXd&)>& f) const {
    if (options.perturb_sign_flip) analytic = -analytic;
    return relative_error(analytic, central_difference(f, at, options.step));
  }
};

std::span<const double> view(const MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view_mut(MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

std::vector<bool> random_matched(Context& ctx, int n) {
  std::vector<bool> out(n);
  for (int i = 0; i < n; ++i) out[i] = ctx.pick(0, 1) == 1;
  return out;
}

double focal_instance(Context& ctx, int i) {
  const int n = ctx.pick(3, 16);
  const MatrixXd p = ctx.uniform(n, 1, 0.02, 0.98);
  const MatrixXd t = ctx.uniform(n, 1, 0.0, 1.0).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
  const double gamma = i % 3 == 0 ? 0.0 : 2.0;
  MatrixXd g(n, 1);
  focal_loss(view(p), view(t), 0.25, gamma, view_mut(g));
  return ctx.compare(g, p, [&](const MatrixXd& x) { return focal_loss(view(x), view(t), 0.25, gamma); });
}

double dice_instance(Context& ctx, int) {
  const int n = ctx.pick(3, 16);
  const MatrixXd p = ctx.uniform(n, 1, 0.02, 0.98);
  const MatrixXd t = ctx.uniform(n, 1, 0.0, 1.0).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
  MatrixXd g(n, 1);
  dice_loss(view(p), view(t), 1.0, view_mut(g));
  return ctx.compare(g, p, [&](const MatrixXd& x) { return dice_loss(view(x), view(t), 1.0); });
}

double existence_instance(Context& ctx, int) {
  const int n = ctx.pick(2, 12);
  const MatrixXd p = ctx.uniform(n, 1, 0.02, 0.98);
  const auto matched = random_matched(ctx, n);
  MatrixXd g(n, 1);
  existence_loss(view(p), matched, view_mut(g));
  return ctx.compare(g, p, [&](const MatrixXd& x) { return existence_loss(view(x), matched); });
}

double mse_instance(Context& ctx, int) {
  const int s = ctx.pick(2, 12);
  const int c = ctx.pick(1, 6);
  const MatrixXd f = ctx.gaussian(s, c);
  const MatrixXd t = ctx.gaussian(s, c);
  MatrixXd g;
  mse_dense_loss(f, t, &g);
  return ctx.compare(g, f, [&](const MatrixXd& x) { return mse_dense_loss(x, t); });
}

SupervisionBundle random_bundle(Context& ctx, int k, int c, bool text) {
  SupervisionBundle b;
  b.gt_features = ctx.gaussian(k, c);
  if (text) {
    b.text = ctx.gaussian(k, c);
    b.text_mask = random_matched(ctx, k);
    b.text_mask[0] = true;
  }
  return b;
}

double input_instance(Context& ctx, int) {
  const int k = ctx.pick(2, 6), c = ctx.pick(2, 8);
  const MatrixXd r = ctx.gaussian(k, c), init = ctx.gaussian(k, c);
  MatrixXd g;
  loss_input_consistency(r, init, &g);
  return ctx.compare(g, r, [&](const MatrixXd& x) { return loss_input_consistency(x, init); });
}

double gt_instance(Context& ctx, int i) {
  const int k = ctx.pick(2, 6), c = ctx.pick(2, 8);
  const MatrixXd r = ctx.gaussian(k, c);
  const auto b = random_bundle(ctx, k, c, i % 2 == 0);
  MatrixXd g;
  loss_gt_alignment(r, b, &g);
  return ctx.compare(g, r, [&](const MatrixXd& x) { return loss_gt_alignment(x, b); });
}

double text_instance(Context& ctx, int) {
  const int k = ctx.pick(2, 6), c = ctx.pick(2, 8);
  const MatrixXd r = ctx.gaussian(k, c);
  const auto b = random_bundle(ctx, k, c, true);
  MatrixXd g;
  loss_text_alignment(r, b, &g);
  return ctx.compare(g, r, [&](const MatrixXd& x) { return loss_text_alignment(x, b); });
}

// max error over every parameter matrix; `loss` evaluates with the current parameter values,
// `backward` fills the analytic gradient per parameter
double parameter_sweep(Context& ctx, const std::vector<MatrixXd*>& targets, const std::vector<MatrixXd>& analytic,
                       const std::function<double()>& loss) {
  double worst = 0.0;
  for (std::size_t p = 0; p < targets.size(); ++p) {
    const MatrixXd original = *targets[p];
    worst = std::max(worst, ctx.compare(analytic[p], original, [&](const MatrixXd& x) {
      *targets[p] = x;
      const double v = loss();
      *targets[p] = original;
      return v;
    }));
  }
  return worst;
}

struct HeadInstance {
  DenseFeatureField field;
  HeadParams head;
  QueryBank bank;
  int layers = 1;
};

HeadInstance random_head(Context& ctx) {
  HeadInstance h;
  const int s = ctx.pick(6, 14);
  const int d = ctx.pick(2, 4);
  h.layers = ctx.pick(1, 2);
  h.field = DenseFeatureField::from_features(ctx.gaussian(s, d));
  h.head = init_head(d, h.layers, ctx.rng());
  h.bank = init_queries(ctx.pick(2, 4), d, ctx.rng());
  return h;
}

double head_gradients(Context& ctx, HeadInstance& h,
                      const std::function<ad::Var(ad::Tape&, const HeadGraph&)>& objective) {
  auto targets = parameter_list(h.head, h.bank);
  auto evaluate = [&](bool backward, std::vector<MatrixXd>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (MatrixXd* m : targets) vars.push_back(tape.variable(*m));
    const ad::Var out = objective(tape, forward_graph(tape, h.field, vars, h.layers));
    if (backward) {
      tape.backward(out);
      for (const ad::Var& v : vars) grads->push_back(v.grad());
    }
    return out.value()(0, 0);
  };
  std::vector<MatrixXd> analytic;
  evaluate(true, &analytic);
  return parameter_sweep(ctx, targets, analytic, [&] { return evaluate(false, nullptr); });
}

double grouping_instance(Context& ctx, int) {
  HeadInstance h = random_head(ctx);
  const int s = static_cast<int>(h.field.features.rows());
  const int groups = ctx.pick(1, h.bank.size());
  MatrixXd gt = MatrixXd::Zero(groups, s);
  for (int j = 0; j < s; ++j) gt(ctx.pick(0, groups - 1), j) = 1.0;
  const SgConfig config;
  const auto pred = forward_grouping(h.field, h.bank, h.head);
  const MatrixXd probs = (1.0 + (-pred.mask_logits.array()).exp()).inverse().matrix();
  const auto match = match_predictions(probs, pred.existence, gt, config);
  return head_gradients(ctx, h, [&](ad::Tape&, const HeadGraph& g) {
    return sg_loss_graph(g, gt, match, h.field.features, config).total;
  });
}

double attention_instance(Context& ctx, int) {
  HeadInstance h = random_head(ctx);
  const int s = static_cast<int>(h.field.features.rows());
  const MatrixXd rl = ctx.gaussian(h.bank.size(), s);
  const MatrixXd re = ctx.gaussian(h.bank.size(), 1);
  return head_gradients(ctx, h, [&](ad::Tape& tape, const HeadGraph& g) {
    return ad::add(ad::sum(ad::hadamard(g.mask_logits, tape.constant(rl))),
                   ad::sum(ad::hadamard(g.exist_logits, tape.constant(re))));
  });
}

double lfa_instance(Context& ctx, int i) {
  const int k = ctx.pick(2, 4), c = ctx.pick(3, 5), s = ctx.pick(4, 10);
  MatrixXd initial = ctx.gaussian(k, c);
  const MatrixXd lang = ctx.gaussian(s, c);
  const auto bundle = random_bundle(ctx, k, c, i % 2 == 0);
  const LfaLambdas lambdas{0.5 + ctx.uniform(1, 1, 0, 1)(0), 0.5 + ctx.uniform(1, 1, 0, 1)(0),
                           0.5 + ctx.uniform(1, 1, 0, 1)(0)};
  auto params = init_refine(c, ctx.pick(1, 2), ctx.pick(2, 6), ctx.rng());
  auto targets = parameter_list(params);
  // the initial atoms feed both the refinement input and, held fixed, the consistency target
  const MatrixXd initial_target = initial;

  ad::Tape tape;
  std::vector<ad::Var> vars;
  const ad::Var x = tape.variable(initial);
  for (MatrixXd* m : targets) vars.push_back(tape.variable(*m));
  tape.backward(lfa_loss_node(refine_graph(x, lang, vars), initial_target, bundle, lambdas));
  std::vector<MatrixXd> analytic{x.grad()};
  for (const ad::Var& v : vars) analytic.push_back(v.grad());

  std::vector<MatrixXd*> all{&initial};
  all.insert(all.end(), targets.begin(), targets.end());
  return parameter_sweep(ctx, all, analytic, [&] {
    return total_lfa_loss(refine_atoms(initial, lang, params), initial_target, bundle, lambdas).total;
  });
}

struct Suite {
  const char* name;
  double (*instance)(Context&, int);
};

constexpr Suite kSuites[] = {
    {"focal", focal_instance},
    {"dice", dice_instance},
    {"existence", existence_instance},
    {"dense_mse", mse_instance},
    {"input_consistency", input_instance},
    {"gt_alignment", gt_instance},
    {"text_alignment", text_instance},
    {"grouping_total", grouping_instance},
    {"aggregation_total", lfa_instance},
    {"attention_stack", attention_instance},
};

}  // namespace

std::vector<std::string> gradcheck_suites() {
  std::vector<std::string> out;
  for (const Suite& s : kSuites) out.emplace_back(s.name);
  return out;
}

bool GradcheckReport::pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.pass; });
}

std::string GradcheckReport::to_table() const {
  std::string out = fmt::format("{:<20} {:>9} {:>14}  {}\n", "suite", "instances", "max_rel_err", "result");
  for (const auto& r : rows) {
    out += fmt::format("{:<20} {:>9} {:>14.3e}  {}\n", r.name, r.instances, r.max_relative_error,
                       r.pass ? "pass" : "FAIL");
  }
  out += fmt::format("gate {:.0e}: {}\n", tolerance, pass() ? "pass" : "FAIL");
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options, const std::vector<std::string>& only) {
  if (options.instances <= 0) throw InvalidArgument("gradcheck: instances must be positive");
  if (!(options.tolerance > 0.0) || !(options.step > 0.0)) {
    throw InvalidArgument("gradcheck: tolerance and step must be positive");
  }
  for (const auto& name : only) {
    const bool known = std::any_of(std::begin(kSuites), std::end(kSuites), [&](const Suite& s) { return name == s.name; });
    if (!known) throw InvalidArgument(fmt::format("gradcheck: unknown suite '{}'", name));
  }
  GradcheckReport report;
  report.tolerance = options.tolerance;
  std::uint64_t salt = 0;
  for (const Suite& s : kSuites) {
    ++salt;
    if (!only.empty() && std::find(only.begin(), only.end(), s.name) == only.end()) continue;
    Context ctx{options, std::mt19937_64(options.seed * 1000003ULL + salt)};
    GradcheckRow row{s.name, options.instances, 0.0, false};
    for (int i = 0; i < options.instances; ++i) {
      const double e = s.instance(ctx, i);
      row.max_relative_error = std::max(row.max_relative_error, std::isnan(e) ? 1e300 : e);
    }
    row.pass = row.max_relative_error <= options.tolerance;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace langfield
