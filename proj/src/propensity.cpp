#include "alrite/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alrite {

std::string to_string(PropensityKind kind) {
  switch (kind) {
    case PropensityKind::logistic_regression: return "logistic_regression";
    case PropensityKind::knn: return "knn";
    case PropensityKind::tree: return "tree";
  }
  return "logistic_regression";
}

namespace {

PropensityKind parse_kind(const std::string& name) {
  if (name == "logistic_regression") return PropensityKind::logistic_regression;
  if (name == "knn") return PropensityKind::knn;
  if (name == "tree") return PropensityKind::tree;
  throw ConfigError("propensity.kind", "unknown model '" + name + "'");
}

double sigmoid(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// log(sigmoid(u)) without overflow.
double log_sigmoid(double u) { return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

std::pair<Index, Index> arm_sizes(std::span<const int> t) {
  const Index n1 = std::count(t.begin(), t.end(), 1);
  return {static_cast<Index>(t.size()) - n1, n1};
}

void require_arms(std::span<const int> t) {
  const auto [n0, n1] = arm_sizes(t);
  if (n0 == 0 || n1 == 0) throw StructuralError("propensity: a treatment arm is empty");
}

}  // namespace

PropensityKind PropensityModel::kind() const {
  if (std::holds_alternative<LogisticModel>(model)) return PropensityKind::logistic_regression;
  if (std::holds_alternative<KnnModel>(model)) return PropensityKind::knn;
  return PropensityKind::tree;
}

std::string PropensitySpec::label() const {
  switch (kind) {
    case PropensityKind::logistic_regression: return "logistic_regression(l2=" + format_double(l2) + ")";
    case PropensityKind::knn: return "knn(k=" + std::to_string(k) + ")";
    case PropensityKind::tree: return "tree(max_depth=" + std::to_string(max_depth) + ")";
  }
  return "";
}

std::vector<PropensitySpec> default_propensity_grid() {
  std::vector<PropensitySpec> grid;
  for (double l2 : {1e-3, 1e-2, 1e-1, 1.0})
    grid.push_back({PropensityKind::logistic_regression, l2, 0, 0});
  for (int k : {5, 15, 50}) grid.push_back({PropensityKind::knn, 0.0, k, 0});
  for (int depth : {2, 3, 4}) grid.push_back({PropensityKind::tree, 0.0, 0, depth});
  return grid;
}

double lr_objective(const LogisticModel& model, const Matrix& x, std::span<const int> t,
                    nn::Gradients* grad) {
  if (x.rows() != static_cast<Index>(t.size())) throw ShapeError("propensity: row count mismatch");
  const auto [n0, n1] = arm_sizes(t);
  if (n0 == 0 || n1 == 0) throw StructuralError("propensity: a treatment arm is empty");
  const auto& layer = model.affine.layers.at(0);
  const Vector score = (x * layer.weight.transpose()).col(0).array() + layer.bias(0);
  double loss = 0.0;
  Vector dscore(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double s = score(i);
    if (t[static_cast<std::size_t>(i)] == 1) {
      loss -= log_sigmoid(s) / static_cast<double>(n1);
      dscore(i) = -(1.0 - sigmoid(s)) / static_cast<double>(n1);
    } else {
      loss -= log_sigmoid(-s) / static_cast<double>(n0);
      dscore(i) = sigmoid(s) / static_cast<double>(n0);
    }
  }
  loss += model.l2 * layer.weight.squaredNorm();
  if (grad) {
    *grad = nn::zeros_like(model.affine);
    (*grad)[0].weight = (dscore.transpose() * x) + 2.0 * model.l2 * layer.weight;
    (*grad)[0].bias(0) = dscore.sum();
  }
  return loss;
}

namespace {

Scaler covariate_scaler(const Dataset& data, std::span<const Index> indices) {
  Scaler s = fit_scaler(data, indices);
  s.y_shift = 0.0;
  s.y_scale = 1.0;
  s.y_clamped = false;
  return s;
}

struct Prepared {
  Scaler scaler;
  Matrix x;
  std::vector<int> t;
};

Prepared prepare(const Dataset& data, std::span<const Index> indices) {
  if (indices.empty()) throw PreconditionError("propensity: empty training set");
  Prepared p;
  p.scaler = covariate_scaler(data, indices);
  const Dataset part = data.subset(indices);
  p.x = p.scaler.transform_x(part.x);
  p.t = part.t;
  require_arms(p.t);
  return p;
}

double gradient_norm(const nn::Gradients& g) {
  double sq = 0.0;
  for (const auto& layer : g) sq += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

PropensityModel train_propensity_lr(const Dataset& data, std::span<const Index> indices,
                                    double l2_strength) {
  if (!(l2_strength >= 0.0)) throw ConfigError("propensity.l2", "must be >= 0");
  Prepared prep = prepare(data, indices);
  LogisticModel lr;
  lr.l2 = l2_strength;
  lr.affine.activation = nn::Activation::identity;
  lr.affine.layers.push_back({Matrix::Zero(1, prep.x.cols()), Vector::Zero(1)});

  nn::AdamConfig config;
  config.base_lr = 0.05;
  config.decay_rate = 1.0;
  nn::AdamState adam = nn::make_adam_state(lr.affine, config);

  PropensityModel out;
  nn::Gradients grad;
  double loss = lr_objective(lr, prep.x, prep.t, &grad);
  LogisticModel best = lr;
  double best_loss = loss;
  out.loss_trace.push_back(best_loss);
  for (int step = 0; step < 5000 && gradient_norm(grad) >= 1e-6; ++step) {
    nn::adam_step(lr.affine, grad, adam);
    loss = lr_objective(lr, prep.x, prep.t, &grad);
    if (!std::isfinite(loss)) break;
    if (loss < best_loss) {
      best_loss = loss;
      best = lr;
    }
    out.loss_trace.push_back(best_loss);
  }
  // Saturated scores mean the arms are (nearly) separable.
  const auto& layer = best.affine.layers[0];
  const Vector score = (prep.x * layer.weight.transpose()).col(0).array() + layer.bias(0);
  out.separation_warning = !std::isfinite(loss) || score.cwiseAbs().maxCoeff() > 30.0;
  out.model = std::move(best);
  out.scaler = std::move(prep.scaler);
  out.fitted = true;
  return out;
}

PropensityModel train_propensity_knn(const Dataset& data, std::span<const Index> indices, int k) {
  if (k < 1) throw ConfigError("propensity.k", "must be >= 1");
  Prepared prep = prepare(data, indices);
  PropensityModel out;
  out.model = KnnModel{k, std::move(prep.x), std::move(prep.t)};
  out.scaler = std::move(prep.scaler);
  out.fitted = true;
  return out;
}

namespace {

double gini(double treated, double total) {
  if (total <= 0.0) return 0.0;
  const double p = treated / total;
  return 2.0 * p * (1.0 - p);
}

int grow(TreeModel& tree, const Matrix& x, const std::vector<int>& t, IndexList rows, int depth) {
  const double total = static_cast<double>(rows.size());
  double treated = 0.0;
  for (Index i : rows) treated += t[static_cast<std::size_t>(i)];
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, treated / total, static_cast<Index>(rows.size())});
  if (depth >= tree.max_depth || static_cast<Index>(rows.size()) < 2 * tree.min_leaf) return id;

  const double parent = total * gini(treated, total);
  double best_impurity = parent;
  int best_feature = -1;
  double best_threshold = 0.0;
  for (Index f = 0; f < x.cols(); ++f) {
    IndexList sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [&](Index a, Index b) { return x(a, f) < x(b, f); });
    double left_treated = 0.0;
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      left_treated += t[static_cast<std::size_t>(sorted[k])];
      const double left_n = static_cast<double>(k + 1);
      const double right_n = total - left_n;
      if (x(sorted[k], f) == x(sorted[k + 1], f)) continue;
      if (left_n < static_cast<double>(tree.min_leaf) || right_n < static_cast<double>(tree.min_leaf)) continue;
      const double impurity = left_n * gini(left_treated, left_n) +
                              right_n * gini(treated - left_treated, right_n);
      if (impurity < best_impurity - 1e-12) {
        best_impurity = impurity;
        best_feature = static_cast<int>(f);
        best_threshold = 0.5 * (x(sorted[k], f) + x(sorted[k + 1], f));
      }
    }
  }
  if (best_feature < 0) return id;

  IndexList left, right;
  for (Index i : rows) (x(i, best_feature) <= best_threshold ? left : right).push_back(i);
  tree.nodes[static_cast<std::size_t>(id)].feature = best_feature;
  tree.nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
  const int l = grow(tree, x, t, std::move(left), depth + 1);
  const int r = grow(tree, x, t, std::move(right), depth + 1);
  tree.nodes[static_cast<std::size_t>(id)].left = l;
  tree.nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

}  // namespace

PropensityModel train_propensity_tree(const Dataset& data, std::span<const Index> indices,
                                      int max_depth, Index min_leaf) {
  if (max_depth < 0) throw ConfigError("propensity.max_depth", "must be >= 0");
  if (min_leaf < 1) throw ConfigError("propensity.min_leaf", "must be >= 1");
  Prepared prep = prepare(data, indices);
  TreeModel tree;
  tree.max_depth = max_depth;
  tree.min_leaf = min_leaf;
  IndexList rows(static_cast<std::size_t>(prep.x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  grow(tree, prep.x, prep.t, std::move(rows), 0);
  PropensityModel out;
  out.model = std::move(tree);
  out.scaler = std::move(prep.scaler);
  out.fitted = true;
  return out;
}

PropensityModel train_propensity(const Dataset& data, std::span<const Index> indices,
                                 const PropensitySpec& spec) {
  switch (spec.kind) {
    case PropensityKind::logistic_regression: return train_propensity_lr(data, indices, spec.l2);
    case PropensityKind::knn: return train_propensity_knn(data, indices, spec.k);
    case PropensityKind::tree: return train_propensity_tree(data, indices, spec.max_depth);
  }
  throw ConfigError("propensity.kind", "unknown model");
}

namespace {

double knn_predict(const KnnModel& knn, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const Index n = knn.reference.rows();
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = {(knn.reference.row(j) - row).squaredNorm(), j};
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(knn.k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  double treated = 0.0;
  for (std::size_t m = 0; m < k; ++m) treated += knn.labels[static_cast<std::size_t>(dist[m].second)];
  return treated / static_cast<double>(k);
}

double tree_predict(const TreeModel& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& cur = tree.nodes[static_cast<std::size_t>(node)];
    node = row(cur.feature) <= cur.threshold ? cur.left : cur.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].value;
}

}  // namespace

Vector predict_eta(const PropensityModel& model, const Matrix& x, double clip) {
  if (!model.fitted) throw PreconditionError("propensity: model is not fitted");
  if (!(clip >= 0.0 && clip < 0.5)) throw PreconditionError("propensity: clip must lie in [0, 0.5)");
  const Matrix z = model.scaler.transform_x(x);
  Vector eta(z.rows());
  if (const auto* lr = std::get_if<LogisticModel>(&model.model)) {
    if (z.cols() != lr->affine.input_dim()) throw ShapeError("propensity: covariate width mismatch");
    const Vector score = nn::forward_batch(lr->affine, z).col(0);
    for (Index i = 0; i < z.rows(); ++i) eta(i) = sigmoid(score(i));
  } else if (const auto* knn = std::get_if<KnnModel>(&model.model)) {
    if (z.cols() != knn->reference.cols()) throw ShapeError("propensity: covariate width mismatch");
    for (Index i = 0; i < z.rows(); ++i) eta(i) = knn_predict(*knn, z.row(i));
  } else {
    const auto& tree = std::get<TreeModel>(model.model);
    for (Index i = 0; i < z.rows(); ++i) eta(i) = tree_predict(tree, z.row(i));
  }
  return eta.cwiseMax(clip).cwiseMin(1.0 - clip);
}

double balanced_cross_entropy(const Vector& eta, std::span<const int> t) {
  if (eta.size() != static_cast<Index>(t.size())) throw ShapeError("propensity: length mismatch");
  const auto [n0, n1] = arm_sizes(t);
  double loss = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    if (t[static_cast<std::size_t>(i)] == 1) loss -= std::log(eta(i)) / static_cast<double>(n1);
    else loss -= std::log(1.0 - eta(i)) / static_cast<double>(n0);
  }
  return loss;
}

PropensitySelection select_propensity(const Dataset& data, std::span<const Index> indices,
                                      std::span<const PropensitySpec> grid, int folds,
                                      std::uint64_t seed, double clip) {
  if (grid.empty()) throw ConfigError("propensity.grid", "must not be empty");
  if (folds < 2) throw ConfigError("propensity.folds", "must be >= 2");
  if (static_cast<Index>(indices.size()) < folds)
    throw PreconditionError("propensity: fewer samples than folds");
  IndexList order(indices.begin(), indices.end());
  Rng rng(derive_seed(seed, 0xe7aULL));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<IndexList> held(static_cast<std::size_t>(folds)), kept(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f)
    for (std::size_t k = 0; k < order.size(); ++k)
      (static_cast<int>(k % static_cast<std::size_t>(folds)) == f ? held : kept)[static_cast<std::size_t>(f)].push_back(order[k]);

  PropensitySelection out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      const PropensityModel model = train_propensity(data, kept[static_cast<std::size_t>(f)], grid[g]);
      const Dataset part = data.subset(held[static_cast<std::size_t>(f)]);
      total += balanced_cross_entropy(predict_eta(model, part.x, clip), part.t);
    }
    const double score = total / folds;
    out.cv_scores.push_back(score);
    if (score < best) {
      best = score;
      out.winner = g;
    }
  }
  out.model = train_propensity(data, indices, grid[out.winner]);
  return out;
}

std::vector<CalibrationBin> calibration_table(const PropensityModel& model, const Dataset& data,
                                              std::span<const Index> indices, int bins,
                                              double clip) {
  if (bins < 2) throw PreconditionError("calibration: need at least 2 bins");
  const Dataset part = data.subset(indices);
  const Vector eta = predict_eta(model, part.x, clip);
  std::vector<CalibrationBin> table(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    table[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / bins;
    table[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / bins;
  }
  for (Index i = 0; i < eta.size(); ++i) {
    const int b = std::min(bins - 1, static_cast<int>(eta(i) * bins));
    CalibrationBin& bin = table[static_cast<std::size_t>(b)];
    bin.mean_eta += eta(i);
    bin.treated_rate += part.t[static_cast<std::size_t>(i)];
    ++bin.count;
  }
  for (CalibrationBin& bin : table) {
    bin.empty = bin.count == 0;
    if (!bin.empty) {
      bin.mean_eta /= static_cast<double>(bin.count);
      bin.treated_rate /= static_cast<double>(bin.count);
    }
  }
  return table;
}

nlohmann::json to_json(const PropensityModel& model) {
  nlohmann::json doc;
  doc["kind"] = to_string(model.kind());
  doc["scaler"] = to_json(model.scaler);
  doc["separation_warning"] = model.separation_warning;
  if (const auto* lr = std::get_if<LogisticModel>(&model.model)) {
    doc["affine"] = nn::to_json(lr->affine);
    doc["l2"] = lr->l2;
  } else if (const auto* knn = std::get_if<KnnModel>(&model.model)) {
    doc["k"] = knn->k;
    std::vector<std::vector<double>> rows;
    for (Index i = 0; i < knn->reference.rows(); ++i) {
      rows.emplace_back(knn->reference.cols());
      for (Index c = 0; c < knn->reference.cols(); ++c) rows.back()[static_cast<std::size_t>(c)] = knn->reference(i, c);
    }
    doc["reference"] = rows;
    doc["labels"] = knn->labels;
  } else {
    const auto& tree = std::get<TreeModel>(model.model);
    doc["max_depth"] = tree.max_depth;
    doc["min_leaf"] = tree.min_leaf;
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& node : tree.nodes)
      nodes.push_back({{"feature", node.feature}, {"threshold", node.threshold}, {"left", node.left},
                       {"right", node.right}, {"value", node.value}, {"count", node.count}});
    doc["nodes"] = nodes;
  }
  return doc;
}

PropensityModel propensity_from_json(const nlohmann::json& doc) {
  PropensityModel model;
  model.scaler = scaler_from_json(doc.at("scaler"));
  model.separation_warning = doc.value("separation_warning", false);
  switch (parse_kind(doc.at("kind").get<std::string>())) {
    case PropensityKind::logistic_regression:
      model.model = LogisticModel{nn::mlp_from_json(doc.at("affine")), doc.at("l2").get<double>()};
      break;
    case PropensityKind::knn: {
      KnnModel knn;
      knn.k = doc.at("k").get<int>();
      const auto rows = doc.at("reference").get<std::vector<std::vector<double>>>();
      const Index cols = rows.empty() ? 0 : static_cast<Index>(rows[0].size());
      knn.reference.resize(static_cast<Index>(rows.size()), cols);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Index>(rows[i].size()) != cols) throw ShapeError("propensity JSON: ragged reference rows");
        for (Index c = 0; c < cols; ++c) knn.reference(static_cast<Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
      }
      knn.labels = doc.at("labels").get<std::vector<int>>();
      if (static_cast<Index>(knn.labels.size()) != knn.reference.rows())
        throw ShapeError("propensity JSON: label count mismatch");
      model.model = std::move(knn);
      break;
    }
    case PropensityKind::tree: {
      TreeModel tree;
      tree.max_depth = doc.at("max_depth").get<int>();
      tree.min_leaf = doc.at("min_leaf").get<Index>();
      for (const auto& node : doc.at("nodes"))
        tree.nodes.push_back(TreeNode{node.at("feature").get<int>(), node.at("threshold").get<double>(),
                                      node.at("left").get<int>(), node.at("right").get<int>(),
                                      node.at("value").get<double>(), node.at("count").get<Index>()});
      if (tree.nodes.empty()) throw ShapeError("propensity JSON: empty tree");
      model.model = std::move(tree);
      break;
    }
  }
  model.fitted = true;
  return model;
}

}  // namespace alrite
