#pragma once

#include "alrite/data.hpp"
#include "alrite/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace alrite {

/// Mean squared error between estimated and true effects.
double pehe(const Vector& tau_hat, const Vector& tau);
double pehe(const Vector& tau_hat, const GroundTruth& truth, std::span<const Index> indices);

/// |mean(tau_hat) - mean(tau)|.
double eps_ate(const Vector& tau_hat, const Vector& tau);
double eps_ate(const Vector& tau_hat, const GroundTruth& truth, std::span<const Index> indices);

struct PolicyRisks {
  std::optional<double> rpol;  // needs both potential outcomes
  double orpol = 0.0;
  bool empty_cell = false;     // some conditioning cell had no samples and contributed 0
};

/// The policy treats x when tau_hat(x) > 0.
PolicyRisks policy_risks(const Vector& tau_hat, const Dataset& data,
                         const GroundTruth* truth = nullptr);

struct BoundReport {
  std::string theorem;
  double bound = 0.0;
  double pehe = 0.0;  // the empirical quantity the bound controls
  double slack = 0.0;
  std::map<std::string, double> terms;
  bool certified = false;  // false when the target Lipschitz constant is unknown
};

/// Single shared embedding with heads h0, h1: within-sample PEHE of
/// (h1 - h0) o phi against (4/n)[sum (1 + w)(h^t o phi - y)^2 + (L^2 + Lh^2) sum |z - z^m|^2].
/// Distances are measured in latent space. Without `L` the bound is computed
/// with L = 0 and reported as uncertified.
BoundReport bound_m1(const Pipeline& p, const Dataset& data, const GroundTruth& truth,
                     std::optional<double> lipschitz);

/// Two pipelines; plug-in PEHE of tau_bar against the cross-pipeline bound.
BoundReport bound_m2(const Pipeline& p0, const Pipeline& p1, const Dataset& data,
                     const GroundTruth& truth, std::optional<double> lipschitz);

/// Same plug-in PEHE against the bound assembled from both compound losses,
/// evaluated at alpha0 = (1 - p)(L^2 + Lh^2), alpha1 = p (L^2 + Lh^2),
/// beta0 = beta1 = 1 with p = n1 / n.
BoundReport bound_m3(const Pipeline& p0, const Pipeline& p1, const Dataset& data,
                     const GroundTruth& truth, std::optional<double> lipschitz, double gamma0,
                     double gamma1);

nlohmann::json to_json(const BoundReport& report);

/// Finite covariate space for the tabular minimization check.
struct DiscreteCell {
  double mass = 0.0;       // P(X = x)
  int latent = 0;          // phi(x)
  double p_control = 0.5;  // P(T = 0 | X = x)
  double mu0 = 0.0;        // E[Y0 | X = x]
  double var0 = 0.0;       // Var[Y0 | X = x]
};

struct DiscreteToy {
  std::vector<DiscreteCell> cells;
};

struct LemmaCheck {
  bool hypothesis_holds = false;    // mu0 is constant on every latent cell
  bool minimizer_matches = false;   // tabular risk minimizer reproduces mu0 everywhere
  bool passed() const { return !hypothesis_holds || minimizer_matches; }
};

/// Minimizes the control factual risk over tabular functions of the latent
/// cell by exhaustive search over candidate values and compares with mu0.
LemmaCheck latent_minimizer_sanity(const DiscreteToy& toy);

}  // namespace alrite
