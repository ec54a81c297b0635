// SPDX-License-Identifier: Apache-2.0
#include "langfield/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "langfield/error.hpp"
#include "langfield/raster.hpp"

namespace langfield {

Matrix sinusoidal_positions(int s, int d) {
  Matrix pe(s, d);
  for (int pos = 0; pos < s; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

DenseFeatureField DenseFeatureField::from_features(Matrix features) {
  DenseFeatureField f;
  f.positions = sinusoidal_positions(static_cast<int>(features.rows()), static_cast<int>(features.cols()));
  f.features = std::move(features);
  return f;
}

HeadParams zero_head(int d, int layers) {
  HeadParams h;
  h.field_proj = Matrix::Zero(d, d);
  const AttentionWeights zero{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d)};
  h.self_blocks.assign(static_cast<std::size_t>(layers), zero);
  h.cross_blocks.assign(static_cast<std::size_t>(layers), zero);
  h.mask_w1 = Matrix::Zero(d, d);
  h.mask_b1 = Matrix::Zero(1, d);
  h.mask_w2 = Matrix::Zero(d, d);
  h.mask_b2 = Matrix::Zero(1, d);
  h.exist_w = Matrix::Zero(d, 1);
  h.exist_b = Matrix::Zero(1, 1);
  return h;
}

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

HeadParams init_head(int d, int layers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  HeadParams h = zero_head(d, layers);
  h.field_proj = Matrix::Identity(d, d);
  for (auto* blocks : {&h.self_blocks, &h.cross_blocks}) {
    for (auto& b : *blocks) {
      b.wq = gaussian(rng, d, d, s);
      b.wk = gaussian(rng, d, d, s);
      b.wv = gaussian(rng, d, d, s);
      b.wo = gaussian(rng, d, d, 0.5 * s);
    }
  }
  h.mask_w1 = gaussian(rng, d, d, s);
  h.mask_w2 = gaussian(rng, d, d, s);
  h.exist_w = gaussian(rng, d, 1, s);
  return h;
}

QueryBank init_queries(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  return {gaussian(rng, n, d, 1.0), gaussian(rng, n, d, 0.1)};
}

std::vector<Matrix*> parameter_list(HeadParams& head, QueryBank& bank) {
  std::vector<Matrix*> out = {&bank.patterns, &bank.pos_embeddings, &head.field_proj};
  for (auto* blocks : {&head.self_blocks, &head.cross_blocks}) {
    for (auto& b : *blocks) {
      for (Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo}) out.push_back(m);
    }
  }
  for (Matrix* m : {&head.mask_w1, &head.mask_b1, &head.mask_w2, &head.mask_b2, &head.exist_w, &head.exist_b}) {
    out.push_back(m);
  }
  return out;
}

namespace {

/// Hands out parameter variables in parameter_list order.
class ParamCursor {
 public:
  explicit ParamCursor(std::span<const ad::Var> vars) : vars_(vars) {}
  ad::Var next() {
    if (i_ >= vars_.size()) throw InvalidArgument("grouping: too few parameter variables");
    return vars_[i_++];
  }
  [[nodiscard]] bool exhausted() const { return i_ == vars_.size(); }

 private:
  std::span<const ad::Var> vars_;
  std::size_t i_ = 0;
};

ad::Var attention(ad::Var queries, ad::Var keys, ad::Var values, double inv_sqrt_d) {
  return ad::matmul(ad::softmax_rows(ad::scale(ad::matmul_nt(queries, keys), inv_sqrt_d)), values);
}

}  // namespace

HeadGraph forward_graph(ad::Tape& tape, const DenseFeatureField& field, std::span<const ad::Var> params,
                        int layers) {
  ParamCursor cur(params);
  ad::Var q = cur.next();
  const ad::Var r = cur.next();
  const ad::Var proj = cur.next();
  const int d = field.dim();
  if (q.cols() != d || r.cols() != d || proj.rows() != d) {
    throw InvalidArgument("forward_grouping: query/field dimensions differ");
  }
  if (field.positions.rows() != field.features.rows() || field.positions.cols() != d) {
    throw InvalidArgument("forward_grouping: positions do not match features");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  const ad::Var raw = tape.constant(field.features);
  const ad::Var pos = tape.constant(field.positions);
  const ad::Var f = ad::matmul(raw, proj);
  const ad::Var f_pos = ad::add(f, pos);

  for (int l = 0; l < layers; ++l) {
    const ad::Var wq = cur.next(), wk = cur.next(), wv = cur.next(), wo = cur.next();
    const ad::Var x = ad::add(q, r);
    const ad::Var att = attention(ad::matmul(x, wq), ad::matmul(x, wk), ad::matmul(q, wv), inv_sqrt_d);
    q = ad::add(q, ad::matmul(att, wo));
  }
  for (int l = 0; l < layers; ++l) {
    const ad::Var wq = cur.next(), wk = cur.next(), wv = cur.next(), wo = cur.next();
    const ad::Var att = attention(ad::matmul(ad::add(q, r), wq), ad::matmul(f_pos, wk), ad::matmul(f, wv), inv_sqrt_d);
    q = ad::add(q, ad::matmul(att, wo));
  }
  const ad::Var w1 = cur.next(), b1 = cur.next(), w2 = cur.next(), b2 = cur.next();
  const ad::Var we = cur.next(), be = cur.next();
  if (!cur.exhausted()) throw InvalidArgument("grouping: parameter count does not match layer count");

  const ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(q, w1), b1));
  const ad::Var embed = ad::add_row(ad::matmul(hidden, w2), b2);
  return {f, ad::matmul_nt(embed, f), ad::add_row(ad::matmul(q, we), be)};
}

namespace {

std::vector<ad::Var> bind(ad::Tape& tape, const HeadParams& head, const QueryBank& bank) {
  auto& h = const_cast<HeadParams&>(head);
  auto& b = const_cast<QueryBank&>(bank);
  std::vector<ad::Var> vars;
  for (Matrix* m : parameter_list(h, b)) vars.push_back(tape.variable(*m));
  return vars;
}

double stable_sigmoid(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

int layer_count(const HeadParams& head) {
  if (head.self_blocks.size() != head.cross_blocks.size()) {
    throw InvalidArgument("grouping: self and cross block counts differ");
  }
  return static_cast<int>(head.self_blocks.size());
}

}  // namespace

GroupPrediction forward_grouping(const DenseFeatureField& field, const QueryBank& bank, const HeadParams& params) {
  ad::Tape tape;
  const auto vars = bind(tape, params, bank);
  const auto g = forward_graph(tape, field, vars, layer_count(params));
  GroupPrediction out;
  out.mask_logits = g.mask_logits.value();
  out.existence = g.exist_logits.value().col(0).unaryExpr(&stable_sigmoid);
  return out;
}

GroupSet filter_and_normalize(const GroupPrediction& prediction, double tau_exist) {
  GroupSet out;
  for (Eigen::Index n = 0; n < prediction.existence.size(); ++n) {
    if (prediction.existence[n] > tau_exist) out.kept_indices.push_back(static_cast<int>(n));
  }
  if (out.kept_indices.empty()) {
    throw Error("filter_and_normalize: no query exceeds the existence threshold " + std::to_string(tau_exist) +
                "; the scene has no groups");
  }
  const auto k = static_cast<Eigen::Index>(out.kept_indices.size());
  const Eigen::Index s = prediction.mask_logits.cols();
  out.maps.resize(k, s);
  for (Eigen::Index i = 0; i < k; ++i) out.maps.row(i) = prediction.mask_logits.row(out.kept_indices[i]);
  for (Eigen::Index col = 0; col < s; ++col) {
    auto c = out.maps.col(col);
    const double m = c.maxCoeff();
    c = (c.array() - m).exp().matrix();
    c /= c.sum();
  }
  return out;
}

std::optional<std::size_t> CameraLocator::operator()(const Eigen::Vector3d& position) const {
  const Eigen::Vector4d pc = camera.world_to_camera * position.homogeneous();
  if (!(pc.z() > camera.near && pc.z() < camera.far)) return std::nullopt;
  const double u = camera.fx * pc.x() / pc.z() + camera.cx;
  const double v = camera.fy * pc.y() / pc.z() + camera.cy;
  const double x = std::floor(u);
  const double y = std::floor(v);
  if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) return std::nullopt;
  return offset + static_cast<std::size_t>(y) * static_cast<std::size_t>(camera.width) + static_cast<std::size_t>(x);
}

SampledWeights sample_weights(const GroupSet& groups, std::span<const Eigen::Vector3d> positions,
                              const Locator& locator) {
  const int k = groups.k();
  if (k < 1) throw InvalidArgument("sample_weights: empty group set");
  SampledWeights out;
  out.weights.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto loc = locator(positions[i]);
    std::vector<float> w(static_cast<std::size_t>(k));
    if (loc && *loc < static_cast<std::size_t>(groups.maps.cols())) {
      for (int a = 0; a < k; ++a) w[a] = static_cast<float>(groups.maps(a, static_cast<Eigen::Index>(*loc)));
    } else {
      std::fill(w.begin(), w.end(), 1.0f / static_cast<float>(k));
      out.out_of_view.push_back(i);
    }
    out.weights.push_back(std::move(w));
  }
  return out;
}

Matrix matching_cost(const Matrix& mask_probs, const Eigen::VectorXd& existence, const Matrix& gt_masks,
                     const SgConfig& config) {
  if (mask_probs.cols() != gt_masks.cols()) throw InvalidArgument("matching_cost: location counts differ");
  const Eigen::Index n = mask_probs.rows();
  const Eigen::Index g = gt_masks.rows();
  Matrix cost(n, g);
  std::vector<double> p(static_cast<std::size_t>(mask_probs.cols()));
  std::vector<double> t(p.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < p.size(); ++s) p[s] = mask_probs(i, static_cast<Eigen::Index>(s));
    for (Eigen::Index j = 0; j < g; ++j) {
      for (std::size_t s = 0; s < t.size(); ++s) t[s] = gt_masks(j, static_cast<Eigen::Index>(s));
      cost(i, j) = config.lambdas.focal * focal_loss(p, t, config.focal_alpha, config.focal_gamma) +
                   config.lambdas.dice * dice_loss(p, t, config.dice_smooth) - existence[i];
    }
  }
  return cost;
}

MatchResult match_predictions(const Matrix& mask_probs, const Eigen::VectorXd& existence, const Matrix& gt_masks,
                              const SgConfig& config) {
  MatchResult m;
  m.assignment = hungarian_match(matching_cost(mask_probs, existence, gt_masks, config));
  m.matched.assign(static_cast<std::size_t>(mask_probs.rows()), false);
  for (const auto& [q, g] : m.assignment.pairs) m.matched[static_cast<std::size_t>(q)] = true;
  return m;
}

namespace {

std::span<const double> as_span(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace

ad::Var focal_loss_node(ad::Var probs, const Matrix& targets, double alpha, double gamma) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw InvalidArgument("focal_loss: shape mismatch");
  }
  Matrix grad(probs.rows(), probs.cols());
  Matrix value(1, 1);
  value(0, 0) = focal_loss(as_span(probs.value()), as_span(targets), alpha, gamma, {grad.data(), static_cast<std::size_t>(grad.size())});
  return probs.tape()->record(std::move(value), {probs}, [probs, grad](ad::Tape& t, std::size_t self) {
    t.grad_mut(probs.id()) += grad * t.grad(self)(0, 0);
  });
}

ad::Var dice_loss_node(ad::Var probs, const Matrix& targets, double smooth) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw InvalidArgument("dice_loss: shape mismatch");
  }
  const Eigen::Index rows = probs.rows();
  Matrix grad = Matrix::Zero(rows, probs.cols());
  Matrix value = Matrix::Zero(1, 1);
  if (rows > 0) {
    // Row-major copies so each row is contiguous.
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMat p = probs.value();
    const RowMat t = targets;
    RowMat g(rows, probs.cols());
    const auto width = static_cast<std::size_t>(probs.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
      value(0, 0) += dice_loss({p.row(r).data(), width}, {t.row(r).data(), width}, smooth, {g.row(r).data(), width});
    }
    value(0, 0) /= static_cast<double>(rows);
    grad = g / static_cast<double>(rows);
  }
  return probs.tape()->record(std::move(value), {probs}, [probs, grad](ad::Tape& t, std::size_t self) {
    t.grad_mut(probs.id()) += grad * t.grad(self)(0, 0);
  });
}

ad::Var existence_loss_node(ad::Var existence, const std::vector<bool>& matched) {
  if (existence.cols() != 1) throw InvalidArgument("existence_loss: expected an N x 1 column");
  Matrix grad(existence.rows(), 1);
  Matrix value(1, 1);
  value(0, 0) = existence_loss(as_span(existence.value()), matched, {grad.data(), static_cast<std::size_t>(grad.size())});
  return existence.tape()->record(std::move(value), {existence}, [existence, grad](ad::Tape& t, std::size_t self) {
    t.grad_mut(existence.id()) += grad * t.grad(self)(0, 0);
  });
}

ad::Var mse_loss_node(ad::Var field, const Matrix& target) {
  Matrix grad;
  Matrix value(1, 1);
  value(0, 0) = mse_dense_loss(field.value(), target, &grad);
  return field.tape()->record(std::move(value), {field}, [field, grad](ad::Tape& t, std::size_t self) {
    t.grad_mut(field.id()) += grad * t.grad(self)(0, 0);
  });
}

SgLossGraph sg_loss_graph(const HeadGraph& graph, const Matrix& gt_masks, const MatchResult& match,
                          const Matrix& mse_target, const SgConfig& config) {
  const auto& l = config.lambdas;
  if (l.focal < 0 || l.dice < 0 || l.exist < 0 || l.mse < 0) {
    throw InvalidArgument("total_sg_loss: loss weights must be non-negative");
  }
  ad::Tape& tape = *graph.mask_logits.tape();
  const ad::Var probs = ad::sigmoid(graph.mask_logits);
  const ad::Var existence = ad::sigmoid(graph.exist_logits);

  std::vector<int> pred_rows;
  Matrix targets(static_cast<Eigen::Index>(match.assignment.pairs.size()), gt_masks.cols());
  for (std::size_t i = 0; i < match.assignment.pairs.size(); ++i) {
    pred_rows.push_back(match.assignment.pairs[i].first);
    targets.row(static_cast<Eigen::Index>(i)) = gt_masks.row(match.assignment.pairs[i].second);
  }

  SgLossGraph out;
  std::vector<ad::Var> terms;
  if (!pred_rows.empty()) {
    const ad::Var matched_probs = ad::gather_rows(probs, pred_rows);
    const ad::Var focal = focal_loss_node(matched_probs, targets, config.focal_alpha, config.focal_gamma);
    const ad::Var dice = dice_loss_node(matched_probs, targets, config.dice_smooth);
    out.components.focal = focal.value()(0, 0);
    out.components.dice = dice.value()(0, 0);
    terms.push_back(ad::scale(focal, l.focal));
    terms.push_back(ad::scale(dice, l.dice));
  }
  const ad::Var exist = existence_loss_node(existence, match.matched);
  const ad::Var mse = mse_loss_node(graph.field, mse_target);
  out.components.exist = exist.value()(0, 0);
  out.components.mse = mse.value()(0, 0);
  terms.push_back(ad::scale(exist, l.exist));
  terms.push_back(ad::scale(mse, l.mse));

  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  out.total = total;
  (void)tape;
  return out;
}

TrainResult train_toy(const DenseFeatureField& field, const Matrix& gt_groups, const TrainConfig& config) {
  return train_toy(field, gt_groups, config, init_head(field.dim(), config.layers, config.seed),
                   init_queries(config.n_queries, field.dim(), config.seed));
}

TrainResult train_toy(const DenseFeatureField& field, const Matrix& gt_groups, const TrainConfig& config,
                      HeadParams params, QueryBank bank) {
  if (gt_groups.cols() != field.locations()) throw InvalidArgument("train_toy: gt groups do not cover the field");
  if ((gt_groups.array() != 0.0 && gt_groups.array() != 1.0).any()) {
    throw InvalidArgument("train_toy: gt groups must be binary masks");
  }
  if (config.steps < 0 || config.learning_rate <= 0.0 || config.clip_norm <= 0.0) {
    throw InvalidArgument("train_toy: invalid optimizer settings");
  }
  const Matrix& target = config.mse_target ? *config.mse_target : field.features;
  const int layers = layer_count(params);

  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    ad::Tape tape;
    const auto vars = bind(tape, params, bank);
    const HeadGraph graph = forward_graph(tape, field, vars, layers);
    const Matrix probs = graph.mask_logits.value().unaryExpr(&stable_sigmoid);
    const Eigen::VectorXd existence = graph.exist_logits.value().col(0).unaryExpr(&stable_sigmoid);
    const MatchResult match = match_predictions(probs, existence, gt_groups, config.sg);
    const SgLossGraph loss = sg_loss_graph(graph, gt_groups, match, target, config.sg);
    const double total = loss.total.value()(0, 0);
    if (!std::isfinite(total)) {
      throw Error("train_toy: loss diverged (non-finite) at step " + std::to_string(step));
    }
    result.trace.push_back({step, loss.components, total});

    tape.backward(loss.total);
    double norm2 = 0.0;
    for (const auto& v : vars) norm2 += v.grad().squaredNorm();
    const double norm = std::sqrt(norm2);
    const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
    auto targets = parameter_list(params, bank);
    for (std::size_t i = 0; i < targets.size(); ++i) *targets[i] -= config.learning_rate * clip * vars[i].grad();
  }
  result.params = std::move(params);
  result.bank = std::move(bank);
  return result;
}

std::string loss_trace_csv(const std::vector<LossTraceRow>& trace) {
  std::ostringstream out;
  out << "step,L_focal,L_dice,L_exist,L_MSE,total\n";
  out << std::setprecision(10);
  for (const auto& row : trace) {
    out << row.step << ',' << row.components.focal << ',' << row.components.dice << ',' << row.components.exist << ','
        << row.components.mse << ',' << row.total << '\n';
  }
  return out.str();
}

double matched_mask_miou(const GroupPrediction& prediction, const Matrix& gt_groups, const SgConfig& config) {
  if (gt_groups.rows() == 0) throw InvalidArgument("matched_mask_miou: no ground-truth groups");
  const Matrix probs = prediction.mask_logits.unaryExpr(&stable_sigmoid);
  const MatchResult match = match_predictions(probs, prediction.existence, gt_groups, config);
  double total = 0.0;
  for (const auto& [q, g] : match.assignment.pairs) {
    double inter = 0.0, uni = 0.0;
    for (Eigen::Index s = 0; s < gt_groups.cols(); ++s) {
      const bool p = probs(q, s) > 0.5;
      const bool t = gt_groups(g, s) > 0.5;
      inter += (p && t) ? 1.0 : 0.0;
      uni += (p || t) ? 1.0 : 0.0;
    }
    total += uni > 0.0 ? inter / uni : 1.0;
  }
  return total / static_cast<double>(gt_groups.rows());
}

RegionSupervision make_region_supervision(const Scene& scene, const Camera& source, int feature_dim,
                                          double noise, std::uint64_t seed) {
  if (feature_dim < 1) throw InvalidArgument("make_region_supervision: feature_dim must be >= 1");
  const auto rendered = render<double>(scene, source, {16, 1});
  const int k = scene.dictionary.k();
  const int c = scene.dictionary.c();
  const auto s = static_cast<Eigen::Index>(rendered.alpha.pixel_count());

  RegionSupervision out;
  out.source = source;
  out.location_region.assign(static_cast<std::size_t>(s), -1);
  int regions = 0;
  for (Eigen::Index i = 0; i < s; ++i) {
    if (rendered.alpha.data[i] < 0.5) continue;
    const auto px = rendered.weight_maps.pixel(static_cast<std::size_t>(i));
    const int r = static_cast<int>(std::max_element(px.begin(), px.end()) - px.begin());
    out.location_region[i] = r;
    regions = std::max(regions, r + 1);
  }
  if (regions == 0) throw InvalidArgument("make_region_supervision: the source view sees no primitives");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit = [&](int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    return Eigen::VectorXd(v.normalized());
  };
  std::vector<Eigen::VectorXd> embed;
  for (int r = 0; r <= regions; ++r) embed.push_back(3.0 * unit(feature_dim));  // last = background

  Matrix features(s, feature_dim);
  out.language.resize(s, c);
  out.gt_groups = Matrix::Zero(regions, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const int r = out.location_region[i];
    const auto& e = embed[r < 0 ? regions : r];
    for (int j = 0; j < feature_dim; ++j) features(i, j) = e[j] + noise * normal(rng);
    for (int j = 0; j < c; ++j) {
      const double base = r < 0 ? 0.0 : scene.dictionary.atoms(std::min(r, k - 1), j);
      out.language(i, j) = base + noise * normal(rng) / std::sqrt(static_cast<double>(c));
    }
    if (r >= 0) out.gt_groups(r, i) = 1.0;
  }
  out.field = DenseFeatureField::from_features(std::move(features));
  return out;
}

}  // namespace langfield
