#pragma once

#include "alrite/data.hpp"
#include "alrite/nn.hpp"
#include "alrite/twin.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace alrite {

/// Which arm the pipeline is built around. A control-driven pipeline fits the
/// control outcome plainly, the treated outcome with twin-vote reweighting,
/// and pulls control samples towards their treated twins in latent space.
/// The treatment-driven pipeline swaps the arms.
enum class Role { control_driven, treatment_driven };

std::string to_string(Role role);
Role parse_role(const std::string& name);

/// Arm whose factual term is unweighted and whose samples carry the twin term.
inline int driving_arm(Role role) { return role == Role::control_driven ? 0 : 1; }

struct PipelineHyperparams {
  double alpha = 1.0;  // counterfactualizability strength
  double beta = 0.0;   // twin-vote reweighting importance
  double gamma = 1e-4; // L2 strength over all parameters
  int embed_layers = 2;
  int embed_width = 50;
  int head_layers = 2;
  int head_width = 50;
  Index batch_size = 100;
  int epochs = 100;
  double base_lr = 1e-3;
  double decay_rate = 0.97;
  long decay_period = 100;
  bool normalize_embedding = true;
  bool normalize_heads = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const PipelineHyperparams& hp);
PipelineHyperparams hyperparams_from_json(const nlohmann::json& doc);

/// Embedding phi followed by one outcome head per arm. Networks work in model
/// units: standardized covariates in, standardized outcome out.
struct Pipeline {
  nn::Mlp phi;
  nn::Mlp h0;
  nn::Mlp h1;
  Role role = Role::control_driven;
  Scaler scaler;  // raw -> model units

  const nn::Mlp& head(int arm) const { return arm == 1 ? h1 : h0; }
  nn::Mlp& head(int arm) { return arm == 1 ? h1 : h0; }
  void validate() const;
};

/// phi: d -> W with embed_layers affine layers; heads: W -> H (head_layers
/// hidden layers) -> 1.
Pipeline make_pipeline(Index input_dim, Role role, const PipelineHyperparams& hp, Rng& rng);

struct LossBreakdown {
  double factual_driving = 0.0;   // driving arm factual MSE
  double factual_weighted = 0.0;  // other arm, (1 + beta w) weighted
  double twin = 0.0;              // alpha-scaled squared twin distances
  double regularization = 0.0;    // gamma * squared parameter norm
  double total = 0.0;
};

/// Full compound loss on `data` (model units). `twins` must come from the
/// current embedding of the same rows.
LossBreakdown compound_loss(const Pipeline& p, const Dataset& data, const TwinMap& twins,
                            const PipelineHyperparams& hp);

struct PipelineGradients {
  nn::Gradients phi;
  nn::Gradients h0;
  nn::Gradients h1;
};

struct LossAndGradients {
  LossBreakdown loss;
  PipelineGradients grads;
};

/// Minibatch estimate: data terms restricted to `members` and scaled by
/// `n_scale` (|data| / |members| gives an unbiased estimate), arm counts taken
/// from the whole of `data`, regularization in full. Twin indices are held
/// constant; gradients flow through both ends of every twin pair.
LossAndGradients compound_loss_gradients(const Pipeline& p, const Dataset& data,
                                         const TwinMap& twins, const PipelineHyperparams& hp,
                                         std::span<const Index> members, double n_scale);

struct EpochRecord {
  LossBreakdown train_loss;
  double validation_mse = 0.0;  // original outcome units
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // index 0 is the initialization
  int retained_epoch = 0;
  double retained_validation_mse = 0.0;
};

/// Standardizes on the training rows, trains with minibatch Adam and keeps the
/// epoch with the lowest validation factual MSE.
std::pair<Pipeline, TrainReport> train_pipeline(const Dataset& data, const SplitIndices& split,
                                                Role role, const PipelineHyperparams& hp,
                                                std::uint64_t seed);

/// Predictions on raw covariates, in original outcome units.
Matrix embed(const Pipeline& p, const Matrix& x);
Vector predict_mu(const Pipeline& p, const Matrix& x, int arm);
Vector predict_tau(const Pipeline& p, const Matrix& x);
Vector predict_factual(const Pipeline& p, const Matrix& x, std::span<const int> t);

/// Mean squared factual error over `indices`, original units.
double factual_mse(const Pipeline& p, const Dataset& data, std::span<const Index> indices);

nlohmann::json to_json(const Pipeline& p);
Pipeline pipeline_from_json(const nlohmann::json& doc);

}  // namespace alrite
