#pragma once

#include "alrite/data.hpp"
#include "alrite/nn.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace alrite {

inline constexpr double kDefaultEtaClip = 0.01;

enum class PropensityKind { logistic_regression, knn, tree };

std::string to_string(PropensityKind kind);

/// sigmoid(<w, x> + b), stored as a single affine layer.
struct LogisticModel {
  nn::Mlp affine;
  double l2 = 0.0;
};

struct KnnModel {
  int k = 5;
  Matrix reference;         // standardized covariates
  std::vector<int> labels;  // treatment flags of the reference rows
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  double value = 0.0;  // treated fraction of the training rows reaching the node
  Index count = 0;
};

struct TreeModel {
  int max_depth = 3;
  Index min_leaf = 10;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct PropensityModel {
  std::variant<LogisticModel, KnnModel, TreeModel> model;
  Scaler scaler;  // covariate standardization fitted on the training rows
  bool fitted = false;
  bool separation_warning = false;
  std::vector<double> loss_trace;  // best-so-far objective per optimizer step (logistic only)

  PropensityKind kind() const;
};

struct PropensitySpec {
  PropensityKind kind = PropensityKind::logistic_regression;
  double l2 = 1e-2;
  int k = 15;
  int max_depth = 3;

  std::string label() const;
};

/// Logistic l2 {1e-3, 1e-2, 1e-1, 1}, kNN k {5, 15, 50}, tree depth {2, 3, 4}.
std::vector<PropensitySpec> default_propensity_grid();

/// Class-balanced cross-entropy plus l2 * |w|^2 (bias unpenalized), on
/// standardized covariates. Returns the value and fills `grad` (same layout as
/// the affine layer) when non-null.
double lr_objective(const LogisticModel& model, const Matrix& x, std::span<const int> t,
                    nn::Gradients* grad = nullptr);

/// Full-batch Adam until the gradient norm drops below 1e-6 or 5000 steps;
/// keeps the best iterate.
PropensityModel train_propensity_lr(const Dataset& data, std::span<const Index> indices,
                                    double l2_strength);
PropensityModel train_propensity_knn(const Dataset& data, std::span<const Index> indices, int k);
/// CART with Gini impurity; leaves hold at least `min_leaf` rows.
PropensityModel train_propensity_tree(const Dataset& data, std::span<const Index> indices,
                                      int max_depth, Index min_leaf = 10);
PropensityModel train_propensity(const Dataset& data, std::span<const Index> indices,
                                 const PropensitySpec& spec);

/// Raw-covariate predictions clipped to [clip, 1 - clip]. clip = 0 disables clipping.
Vector predict_eta(const PropensityModel& model, const Matrix& x, double clip = kDefaultEtaClip);

/// Balanced cross-entropy of clipped predictions; an absent arm contributes nothing.
double balanced_cross_entropy(const Vector& eta, std::span<const int> t);

struct PropensitySelection {
  PropensityModel model;
  std::vector<double> cv_scores;  // one per grid entry, grid order
  std::size_t winner = 0;
};

/// Grid search by `folds`-fold cross-validated balanced cross-entropy; the
/// winner is refit on all of `indices`. Ties go to the earlier grid entry.
PropensitySelection select_propensity(const Dataset& data, std::span<const Index> indices,
                                      std::span<const PropensitySpec> grid, int folds,
                                      std::uint64_t seed, double clip = kDefaultEtaClip);

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_eta = 0.0;
  double treated_rate = 0.0;
  Index count = 0;
  bool empty = true;
};

/// Equal-width bins over [0, 1] of the clipped predictions.
std::vector<CalibrationBin> calibration_table(const PropensityModel& model, const Dataset& data,
                                              std::span<const Index> indices, int bins,
                                              double clip = kDefaultEtaClip);

nlohmann::json to_json(const PropensityModel& model);
PropensityModel propensity_from_json(const nlohmann::json& doc);

}  // namespace alrite
