#pragma once

#include "alrite/data.hpp"
#include "alrite/propensity.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace alrite {

/// RBF kernel ridge regression on standardized covariates and centered outcomes.
struct KernelRidge {
  Scaler scaler;   // covariates only
  Matrix train_x;  // standardized
  Vector coef;
  double y_mean = 0.0;
  double bandwidth = 1.0;
  double ridge = 1e-2;
};

/// Relative bandwidths multiply the median pairwise distance of the training rows.
struct KernelRidgeGrid {
  std::vector<double> relative_bandwidths = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> ridges = {1e-6, 1e-4, 1e-2, 1.0};
  int folds = 5;
};

/// Selects bandwidth and ridge by k-fold CV mean squared error (ties to the
/// earlier grid point), then refits on all rows.
KernelRidge fit_kernel_ridge(const Dataset& data, std::span<const Index> indices,
                             const KernelRidgeGrid& grid, std::uint64_t seed);
Vector predict(const KernelRidge& model, const Matrix& x);

struct Auxiliaries {
  KernelRidge mu0;  // fit on control rows
  KernelRidge mu1;  // fit on treated rows
  KernelRidge m;    // fit on all rows
  PropensityModel eta;
  Scaler instance_scaler;  // for the nearest-neighbour imputation
  double clip = kDefaultEtaClip;
};

Auxiliaries fit_auxiliaries(const Dataset& data, std::span<const Index> train, std::uint64_t seed,
                            const std::vector<PropensitySpec>& grid = default_propensity_grid(),
                            double clip = kDefaultEtaClip);

/// Auxiliary quantities on a validation set, computed once per set.
struct AuxiliaryPredictions {
  Vector mu0;
  Vector mu1;
  Vector m;
  Vector eta;         // clipped
  Vector nn_outcome;  // outcome of the nearest opposite-arm validation sample
};

AuxiliaryPredictions predict_auxiliaries(const Auxiliaries& aux, const Dataset& validation);

enum class ProxyKind { mu_risk, mu_risk_iptw, r_risk, tau_naive, tau_1nni, tau_iptw, tau_u, tau_dr };

std::string to_string(ProxyKind kind);
ProxyKind parse_proxy(const std::string& name);
std::vector<ProxyKind> all_proxy_kinds();

/// A candidate's outputs on the validation rows.
struct CandidatePredictions {
  std::optional<Vector> tau;      // estimated effect
  std::optional<Vector> factual;  // prediction of the observed outcome
};

/// Raised when a proxy needs a prediction the candidate did not supply.
class KindMismatchError : public Error {
 public:
  using Error::Error;
};

/// Mean over the validation rows of the proxy's per-sample expression.
double proxy_score(ProxyKind kind, const CandidatePredictions& candidate, const Dataset& validation,
                   const AuxiliaryPredictions& aux);

struct RankAgreement {
  double spearman = 0.0;
  double kendall = 0.0;
  double dcg = 0.0;
};

/// 1-based ranks, ties sharing their average rank.
Vector average_ranks(const Vector& values);

/// u: true errors, v: proxy scores. p <= 0 means all items.
RankAgreement rank_agreement(const Vector& u, const Vector& v, int p = 0);

struct CandidateSelection {
  std::size_t winner = 0;
  std::vector<double> scores;
};

CandidateSelection select_candidate(std::span<const CandidatePredictions> candidates,
                                    ProxyKind kind, const Dataset& validation,
                                    const AuxiliaryPredictions& aux);

}  // namespace alrite
