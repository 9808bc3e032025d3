#pragma once

#include "alrite/common.hpp"
#include "alrite/rng.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace alrite {

enum class FeatureKind { continuous, binary, count };

std::string to_string(FeatureKind kind);

/// Observational sample: covariates, binary treatment, factual outcome.
struct Dataset {
  Matrix x;                        // n x d
  std::vector<int> t;              // 0 = control, 1 = treated
  Vector y;                        // observed outcome
  std::vector<FeatureKind> kinds;  // one per column

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
  Index n_treated() const;
  Index n_control() const { return size() - n_treated(); }

  Dataset subset(std::span<const Index> indices) const;
  IndexList arm_indices(int arm) const;

  /// Shape and finiteness checks; throws ShapeError / NumericError / PreconditionError.
  void validate() const;
  /// validate() plus at least one sample in each arm (StructuralError otherwise).
  void require_both_arms() const;
};

/// Noiseless potential-outcome surfaces. tau = mu1 - mu0 exactly.
struct GroundTruth {
  Vector mu0;
  Vector mu1;
  Vector tau;

  static GroundTruth from_surfaces(Vector mu0, Vector mu1);
  GroundTruth subset(std::span<const Index> indices) const;
  Index size() const { return mu0.size(); }
};

/// Synthetic draw: data, surfaces and the generating propensity P(T=1|x).
struct Synthetic {
  Dataset data;
  GroundTruth truth;
  Vector propensity;
};

// ---------------------------------------------------------------------------
// Generators

struct IhdpConfig {
  Index n = 747;
  Index d = 25;
  Index n_continuous = 6;  // first columns continuous N(0,1), the rest Bernoulli(0.5)
  double p_treat = 139.0 / 747.0;
  bool confounded = false;            // P(T=1|x) = sigmoid(logit(p_treat) + strength * <x, g>)
  double confounding_strength = 1.0;
  std::vector<double> beta_grid = {0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<double> beta_probs = {0.6, 0.1, 0.1, 0.1, 0.1};
  double noise_sd = 1.0;
  double target_att = 4.0;
};

/// mu0 = exp(<x + 0.5, beta>), mu1 = <x + 0.5, beta> + omega, with omega set so
/// that the mean effect over the treated equals target_att.
Synthetic generate_ihdp_like(std::uint64_t seed, const IhdpConfig& config);
Synthetic generate_ihdp_like(std::uint64_t seed, Index n, Index d, double p_treat);

enum class TermKind { zero, polynomial, step, indicator };
enum class Link { identity, sigmoid, clip };

/// One univariate term. polynomial: c0*x + c1*x^2 + c2*x^3; step: c0 * [x > lo];
/// indicator: c0 * [lo <= x <= hi].
struct TermSpec {
  TermKind kind = TermKind::zero;
  std::vector<double> coeffs;
  double lo = 0.0;
  double hi = 0.0;

  double operator()(double value) const;
};

/// g(offset + f1(x_a) + f2(x_b) + f3(x_a) * f4(x_b))
struct SurfaceSpec {
  Index feature_a = 0;
  Index feature_b = 0;
  TermSpec f1, f2, f3, f4;
  double offset = 0.0;
  Link link = Link::identity;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct AcicProtocol {
  Index n_continuous = 3;
  Index n_count = 0;
  Index n_binary = 0;
  double count_rate = 3.0;
  SurfaceSpec propensity;  // link output clipped to [0.05, 0.95]
  SurfaceSpec outcome0;
  SurfaceSpec outcome1;
  double noise_sd = 1.0;

  Index dim() const { return n_continuous + n_count + n_binary; }
  void validate() const;
};

/// Random protocol: feature pairs, term kinds and links drawn from `seed`.
AcicProtocol random_acic_protocol(std::uint64_t seed, Index n_continuous, Index n_count,
                                  Index n_binary);

Synthetic generate_acic_like(std::uint64_t seed, Index n, const AcicProtocol& protocol);

struct ToyConfig {
  double cluster_offset = 2.0;  // clusters centered at (0, +offset) and (0, -offset)
  double horizontal_sd = 1.5;
  double vertical_sd = 0.4;
  double slope = 2.5;           // logistic slope of P(T=1|x1), sign flips between clusters
};

/// Rows [0, n/2) form the lower cluster, rows [n/2, n) the upper one.
/// Outcome y = x1 + t + N(0, 0.1^2).
Synthetic generate_two_cluster_toy(std::uint64_t seed, Index n, const ToyConfig& config = {});

// ---------------------------------------------------------------------------
// CSV I/O: header x0,...,x{d-1},t,y[,mu0,mu1]

struct CsvContents {
  Dataset data;
  std::optional<GroundTruth> truth;
};

std::string to_csv(const Dataset& data, const GroundTruth* truth = nullptr);
CsvContents parse_csv(const std::string& text);
void save_csv(const std::filesystem::path& path, const Dataset& data,
              const GroundTruth* truth = nullptr);
CsvContents load_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Splitting and standardization

struct SplitIndices {
  IndexList train;
  IndexList validation;
  IndexList test;
};

/// |test| = round(n * test_fraction), |validation| = round((n - |test|) * val_fraction).
/// Every part keeps both arms or the permutation is redrawn (10 attempts).
SplitIndices split(const Dataset& data, double test_fraction, double val_fraction,
                   std::uint64_t seed);

nlohmann::json to_json(const SplitIndices& split);
SplitIndices split_from_json(const nlohmann::json& doc);

/// Affine maps x -> (x - shift) / scale per column and y -> (y - y_shift) / y_scale.
/// An empty shift vector means identity on x.
struct Scaler {
  Vector x_shift;
  Vector x_scale;
  double y_shift = 0.0;
  double y_scale = 1.0;
  std::vector<bool> clamped;  // zero-variance columns passed through
  bool y_clamped = false;

  bool any_clamped() const;
  Matrix transform_x(const Matrix& x) const;
  Vector transform_y(const Vector& y) const;
  Vector inverse_y(const Vector& y) const;
  Dataset transform(const Dataset& data) const;
};

/// Fits on `fit_indices` only. Binary columns keep shift 0 / scale 1; continuous
/// and count columns get population mean / sd.
Scaler fit_scaler(const Dataset& data, std::span<const Index> fit_indices);
std::pair<Scaler, Dataset> standardize(const Dataset& data, std::span<const Index> fit_indices);

nlohmann::json to_json(const Scaler& scaler);
Scaler scaler_from_json(const nlohmann::json& doc);

}  // namespace alrite
