#include "alrite/pipeline.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "../support/params.hpp"

#include <gtest/gtest.h>

namespace alrite {
namespace {

PipelineHyperparams small_hp(double alpha, double beta, double gamma) {
  PipelineHyperparams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  hp.gamma = gamma;
  hp.embed_layers = 2;
  hp.embed_width = 4;
  hp.head_layers = 1;
  hp.head_width = 3;
  return hp;
}

Pipeline small_pipeline(Index d, Role role, const PipelineHyperparams& hp, std::uint64_t seed) {
  Rng rng(seed);
  return make_pipeline(d, role, hp, rng);
}

TEST(Pipeline, RoleNames) {
  EXPECT_EQ(parse_role(to_string(Role::control_driven)), Role::control_driven);
  EXPECT_EQ(parse_role(to_string(Role::treatment_driven)), Role::treatment_driven);
  EXPECT_THROW(parse_role("both"), ConfigError);
  EXPECT_EQ(driving_arm(Role::control_driven), 0);
  EXPECT_EQ(driving_arm(Role::treatment_driven), 1);
}

TEST(Pipeline, ShapesFollowHyperparams) {
  const PipelineHyperparams hp = small_hp(1, 0, 0);
  const Pipeline p = small_pipeline(5, Role::control_driven, hp, 1);
  EXPECT_EQ(p.phi.layer_dims(), (std::vector<Index>{5, 4, 4}));
  EXPECT_EQ(p.h0.layer_dims(), (std::vector<Index>{4, 3, 1}));
  EXPECT_TRUE(p.phi.normalize_output);
  EXPECT_FALSE(p.h0.normalize_output);
}

TEST(Pipeline, ValidateNamesField) {
  PipelineHyperparams hp;
  hp.alpha = -1;
  try {
    hp.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "alpha");
  }
  hp = {};
  hp.batch_size = 0;
  EXPECT_THROW(hp.validate(), ConfigError);
}

TEST(Pipeline, HyperparamJsonRoundTrip) {
  PipelineHyperparams hp = small_hp(0.1, 0.01, 1e-3);
  hp.epochs = 7;
  const PipelineHyperparams back = hyperparams_from_json(to_json(hp));
  EXPECT_EQ(to_json(back), to_json(hp));
}

// Loss value by hand from the definition, as an oracle for compound_loss.
double reference_loss(const Pipeline& p, const Dataset& data, const TwinMap& twins,
                      const PipelineHyperparams& hp) {
  const int a = driving_arm(p.role);
  const Matrix z = nn::forward_batch(p.phi, data.x);
  double n_a = 0, n_b = 0;
  for (int t : data.t) (t == a ? n_a : n_b) += 1;
  double fa = 0, fb = 0, tw = 0;
  for (Index i = 0; i < data.size(); ++i) {
    const int ti = data.t[static_cast<std::size_t>(i)];
    const double pred = nn::forward(p.head(ti), z.row(i).transpose())(0);
    const double r = data.y(i) - pred;
    if (ti == a) {
      fa += r * r;
      tw += (z.row(i) - z.row(twins.twin_index[static_cast<std::size_t>(i)])).squaredNorm();
    } else {
      fb += (1 + hp.beta * static_cast<double>(twins.weight[static_cast<std::size_t>(i)])) * r * r;
    }
  }
  const double reg = hp.gamma * (nn::param_norm_sq(p.phi) + nn::param_norm_sq(p.h0) + nn::param_norm_sq(p.h1));
  return fa / n_a + fb / (n_b + hp.beta * n_a) + hp.alpha * tw / n_a + reg;
}

TEST(Pipeline, LossMatchesHandComputation) {
  for (Role role : {Role::control_driven, Role::treatment_driven}) {
    const Dataset data = testing::random_dataset(12, 3, 4);
    const PipelineHyperparams hp = small_hp(0.7, 0.3, 1e-2);
    const Pipeline p = small_pipeline(3, role, hp, 5);
    const TwinMap twins = mirror_twins(nn::forward_batch(p.phi, data.x), data.t);
    const LossBreakdown loss = compound_loss(p, data, twins, hp);
    EXPECT_NEAR(loss.total, reference_loss(p, data, twins, hp), 1e-12);
    EXPECT_NEAR(loss.total, loss.factual_driving + loss.factual_weighted + loss.twin + loss.regularization, 1e-12);
  }
}

TEST(Pipeline, FullBatchGradientLossEqualsLoss) {
  const Dataset data = testing::random_dataset(15, 3, 7);
  const PipelineHyperparams hp = small_hp(0.5, 1.0, 1e-3);
  const Pipeline p = small_pipeline(3, Role::treatment_driven, hp, 8);
  const TwinMap twins = mirror_twins(nn::forward_batch(p.phi, data.x), data.t);
  const IndexList all = testing::iota(data.size());
  const LossAndGradients lg = compound_loss_gradients(p, data, twins, hp, all, 1.0);
  EXPECT_NEAR(lg.loss.total, compound_loss(p, data, twins, hp).total, 1e-12);
}

void check_gradient(Role role, double alpha, double beta, double gamma, std::uint64_t seed) {
  const Dataset data = testing::random_dataset(10, 3, seed);
  const PipelineHyperparams hp = small_hp(alpha, beta, gamma);
  const Pipeline p = small_pipeline(3, role, hp, seed + 1);
  const TwinMap twins = mirror_twins(nn::forward_batch(p.phi, data.x), data.t);
  const IndexList all = testing::iota(data.size());
  const LossAndGradients lg = compound_loss_gradients(p, data, twins, hp, all, 1.0);
  const Vector numeric = oracle::central_difference(
      [&](const Vector& v) {
        Pipeline q = p;
        testing::unflatten(q, v);
        return compound_loss(q, data, twins, hp).total;
      },
      testing::flatten(p));
  EXPECT_LT(oracle::max_relative_error(testing::flatten(lg.grads), numeric), 1e-6);
}

TEST(Pipeline, GradientFactualTermsOnly) {
  check_gradient(Role::control_driven, 0.0, 0.0, 0.0, 21);
  check_gradient(Role::treatment_driven, 0.0, 0.0, 0.0, 22);
}

TEST(Pipeline, GradientWeightedTerm) { check_gradient(Role::control_driven, 0.0, 3.0, 0.0, 23); }

TEST(Pipeline, GradientTwinTerm) { check_gradient(Role::treatment_driven, 2.0, 0.0, 0.0, 24); }

TEST(Pipeline, GradientRegularizer) { check_gradient(Role::control_driven, 0.0, 0.0, 0.5, 25); }

TEST(Pipeline, GradientFullLoss) {
  check_gradient(Role::control_driven, 1.0, 0.1, 1e-2, 26);
  check_gradient(Role::treatment_driven, 10.0, 1.0, 1e-4, 27);
}

TEST(Pipeline, MinibatchAveragesToFullGradient) {
  // Partitioning the rows into batches scaled by 1 sums to the full data terms.
  const Dataset data = testing::random_dataset(12, 3, 31);
  const PipelineHyperparams hp = small_hp(1.0, 0.5, 0.0);
  const Pipeline p = small_pipeline(3, Role::control_driven, hp, 32);
  const TwinMap twins = mirror_twins(nn::forward_batch(p.phi, data.x), data.t);
  const IndexList all = testing::iota(12);
  const IndexList first(all.begin(), all.begin() + 5), second(all.begin() + 5, all.end());
  const Vector full = testing::flatten(compound_loss_gradients(p, data, twins, hp, all, 1.0).grads);
  const Vector a = testing::flatten(compound_loss_gradients(p, data, twins, hp, first, 1.0).grads);
  const Vector b = testing::flatten(compound_loss_gradients(p, data, twins, hp, second, 1.0).grads);
  EXPECT_LT((a + b - full).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pipeline, LossRejectsStaleTwins) {
  const Dataset data = testing::random_dataset(10, 2, 3);
  const PipelineHyperparams hp = small_hp(1, 0, 0);
  const Pipeline p = small_pipeline(2, Role::control_driven, hp, 3);
  TwinMap twins = mirror_twins(nn::forward_batch(p.phi, data.x), data.t);
  twins.twin_index.pop_back();
  EXPECT_THROW(compound_loss(p, data, twins, hp), Error);
}

TEST(Pipeline, TrainingRetainsBestEpochAndIsDeterministic) {
  const Dataset data = testing::random_dataset(120, 3, 41);
  SplitIndices split = alrite::split(data, 0.1, 0.3, 42);
  PipelineHyperparams hp = small_hp(0.1, 0.1, 1e-4);
  hp.batch_size = 32;
  hp.epochs = 15;
  hp.base_lr = 1e-2;
  const auto [p, report] = train_pipeline(data, split, Role::control_driven, hp, 43);
  ASSERT_EQ(report.epochs.size(), 16u);
  double best = report.epochs[0].validation_mse;
  for (const auto& e : report.epochs) best = std::min(best, e.validation_mse);
  EXPECT_EQ(report.retained_validation_mse, best);
  EXPECT_EQ(report.epochs[static_cast<std::size_t>(report.retained_epoch)].validation_mse, best);
  EXPECT_NEAR(factual_mse(p, data, split.validation), best, 1e-9 * std::max(1.0, best));
  EXPECT_LT(best, report.epochs[0].validation_mse);

  const auto [q, report2] = train_pipeline(data, split, Role::control_driven, hp, 43);
  EXPECT_EQ(to_json(p).dump(), to_json(q).dump());
}

TEST(Pipeline, ZeroEpochsKeepsInitialization) {
  const Dataset data = testing::random_dataset(60, 2, 51);
  const SplitIndices split = alrite::split(data, 0.1, 0.3, 52);
  PipelineHyperparams hp = small_hp(1, 0, 0);
  hp.epochs = 0;
  const auto [p, report] = train_pipeline(data, split, Role::treatment_driven, hp, 53);
  EXPECT_EQ(report.retained_epoch, 0);
  EXPECT_EQ(report.epochs.size(), 1u);
}

TEST(Pipeline, PredictionsAreInOriginalUnits) {
  Dataset data = testing::random_dataset(80, 2, 61);
  data.y = data.y * 100.0 + Vector::Constant(data.size(), 5000.0);
  const SplitIndices split = alrite::split(data, 0.1, 0.3, 62);
  PipelineHyperparams hp = small_hp(0, 0, 0);
  hp.epochs = 2;
  const auto [p, report] = train_pipeline(data, split, Role::control_driven, hp, 63);
  const Vector mu0 = predict_mu(p, data.x, 0), mu1 = predict_mu(p, data.x, 1);
  EXPECT_LT((predict_tau(p, data.x) - (mu1 - mu0)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GT(mu0.mean(), 1000.0);
}

TEST(Pipeline, JsonRoundTripPreservesPredictions) {
  const Dataset data = testing::random_dataset(60, 2, 71);
  const SplitIndices split = alrite::split(data, 0.1, 0.3, 72);
  PipelineHyperparams hp = small_hp(1, 0, 0);
  hp.epochs = 1;
  const auto [p, report] = train_pipeline(data, split, Role::control_driven, hp, 73);
  const Pipeline back = pipeline_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(predict_tau(back, data.x), predict_tau(p, data.x));
}

TEST(Pipeline, NoiselessLinearProblemIsLearned) {
  Rng rng(61);
  const Index n = 300, d = 2;
  Dataset data;
  data.x = testing::gaussian_matrix(n, d, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  data.t.resize(n);
  for (auto& t : data.t) t = unit(rng) < 0.5 ? 1 : 0;
  data.kinds.assign(d, FeatureKind::continuous);
  data.y.resize(n);
  for (Index i = 0; i < n; ++i)
    data.y(i) = data.t[static_cast<std::size_t>(i)] ? 1.0 + data.x(i, 0) - data.x(i, 1) : 0.5 * data.x(i, 0);
  const SplitIndices parts = split(data, 0.1, 0.3, 62);
  PipelineHyperparams hp = small_hp(0.0, 0.0, 1e-4);
  hp.embed_layers = 1;
  hp.embed_width = 20;
  hp.head_width = 20;
  hp.batch_size = 50;
  hp.epochs = 200;
  hp.base_lr = 1e-2;
  hp.normalize_embedding = false;
  const auto [p, report] = train_pipeline(data, parts, Role::control_driven, hp, 63);
  EXPECT_LT(report.retained_validation_mse, 1e-2);
}

}  // namespace
}  // namespace alrite
