#pragma once

#include "alrite/data.hpp"
#include "alrite/pipeline.hpp"
#include "alrite/propensity.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace alrite {

/// Two pipelines and a propensity model; tau = (1 - eta) tau0 + eta tau1.
struct AlriteModel {
  Pipeline p0;  // control-driven
  Pipeline p1;  // treatment-driven
  PropensityModel eta;
  double clip = kDefaultEtaClip;
  TrainReport report0;
  TrainReport report1;
};

struct AlriteFitOptions {
  PipelineHyperparams hp0;
  PipelineHyperparams hp1;
  std::vector<PropensitySpec> propensity_grid = default_propensity_grid();
  int propensity_folds = 5;
  double clip = kDefaultEtaClip;
  bool parallel = true;
};

/// Trains both pipelines concurrently with independent seed streams, and the
/// propensity model on the training rows.
AlriteModel alrite_fit(const Dataset& data, const SplitIndices& split,
                       const AlriteFitOptions& options, std::uint64_t seed);

Vector aggregate_tau(const Vector& eta, const Vector& tau0, const Vector& tau1);

Vector alrite_predict(const AlriteModel& model, const Matrix& x);

struct EtaSensitivity {
  double lhs = 0.0;  // |tau_hat - tau_eta|
  double rhs = 0.0;  // |eta_hat - eta| * (|tau0 - tau| + |tau1 - tau|)
};

/// Euclidean norms over the samples (no averaging).
EtaSensitivity eta_sensitivity(const Vector& eta_hat, const Vector& eta, const Vector& tau0,
                               const Vector& tau1, const Vector& tau);
EtaSensitivity eta_sensitivity_check(const AlriteModel& model, const Vector& true_eta,
                                     const Matrix& x, const Vector& true_tau);

// ---------------------------------------------------------------------------
// Ensembles

/// Softmax of -lambda * risk, computed with max-subtraction.
Vector softmax_weights(const Vector& risk, double lambda);
/// Uniform weight 1/K on the first K members.
Vector topk_weights(Index members, Index k);

enum class EnsembleMode { top_k, softmax };

std::string to_string(EnsembleMode mode);

struct EnsembleModel {
  std::vector<Pipeline> members0;  // sorted by increasing validation risk
  std::vector<Pipeline> members1;
  Vector risk0;
  Vector risk1;
  PropensityModel eta;
  double clip = kDefaultEtaClip;
  EnsembleMode mode = EnsembleMode::top_k;
  Index k = 1;
  double lambda = 1.0;

  Vector weights0() const;
  Vector weights1() const;
};

/// Members must already be sorted by increasing risk.
EnsembleModel build_topk_ensemble(std::vector<Pipeline> members0, Vector risk0,
                                  std::vector<Pipeline> members1, Vector risk1,
                                  PropensityModel eta, Index k, double clip = kDefaultEtaClip);
EnsembleModel build_softmax_ensemble(std::vector<Pipeline> members0, Vector risk0,
                                     std::vector<Pipeline> members1, Vector risk1,
                                     PropensityModel eta, double lambda,
                                     double clip = kDefaultEtaClip);

Vector ensemble_predict(const EnsembleModel& model, const Matrix& x);

/// Stable permutation sorting `risk` increasingly.
IndexList risk_order(const Vector& risk);

/// Per-member potential-outcome predictions on a fixed set of rows; one row
/// per member, original units, members sorted by increasing risk.
struct ArmBank {
  Matrix mu0;
  Matrix mu1;
  Vector risk;
};

ArmBank make_arm_bank(std::span<const Pipeline> members, const Vector& risk, const Matrix& x);

/// Weighted combination of a pair of banks.
struct Combined {
  Vector tau;
  Vector factual;
};

Combined combine(const ArmBank& bank0, const Vector& w0, const ArmBank& bank1, const Vector& w1,
                 const Vector& eta, std::span<const int> t);

struct CurvePoint {
  double param = 0.0;  // K or lambda
  double validation_risk = 0.0;
  std::optional<double> pehe;  // filled when ground truth is supplied
};

struct EnsembleChoice {
  double param = 0.0;
  std::vector<CurvePoint> curve;
};

/// K in 1..min(l0, l1) minimizing the validation factual risk; ties to the smaller K.
EnsembleChoice select_topk(const ArmBank& bank0, const ArmBank& bank1, const Vector& eta,
                           std::span<const int> t, const Vector& y);
/// Same over a lambda grid, ties to the smaller lambda.
EnsembleChoice select_softmax(const ArmBank& bank0, const ArmBank& bank1, const Vector& eta,
                              std::span<const int> t, const Vector& y,
                              std::span<const double> lambdas);

/// {10^(k/2)} for k = -2..16.
std::vector<double> default_lambda_grid();

nlohmann::json to_json(const AlriteModel& model);
AlriteModel alrite_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Reference estimator: one ordinary least-squares fit per arm.

struct OlsTLearner {
  Vector coef0;  // intercept first
  Vector coef1;
};

OlsTLearner fit_ols_t_learner(const Dataset& data, std::span<const Index> indices);
Vector predict_tau(const OlsTLearner& model, const Matrix& x);
Vector predict_mu(const OlsTLearner& model, const Matrix& x, int arm);

}  // namespace alrite
