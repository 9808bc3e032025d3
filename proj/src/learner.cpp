#include "alrite/learner.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace alrite {

AlriteModel alrite_fit(const Dataset& data, const SplitIndices& split,
                       const AlriteFitOptions& options, std::uint64_t seed) {
  const auto train0 = [&] {
    return train_pipeline(data, split, Role::control_driven, options.hp0, derive_seed(seed, 0xa10ULL));
  };
  const auto train1 = [&] {
    return train_pipeline(data, split, Role::treatment_driven, options.hp1, derive_seed(seed, 0xa11ULL));
  };
  AlriteModel model;
  model.clip = options.clip;
  if (options.parallel) {
    auto future0 = std::async(std::launch::async, train0);
    auto future1 = std::async(std::launch::async, train1);
    std::tie(model.p0, model.report0) = future0.get();
    std::tie(model.p1, model.report1) = future1.get();
  } else {
    std::tie(model.p0, model.report0) = train0();
    std::tie(model.p1, model.report1) = train1();
  }
  model.eta = select_propensity(data, split.train, options.propensity_grid, options.propensity_folds,
                                derive_seed(seed, 0xe7aULL), options.clip)
                  .model;
  return model;
}

Vector aggregate_tau(const Vector& eta, const Vector& tau0, const Vector& tau1) {
  if (eta.size() != tau0.size() || eta.size() != tau1.size())
    throw ShapeError("aggregate: length mismatch");
  return ((1.0 - eta.array()) * tau0.array() + eta.array() * tau1.array()).matrix();
}

Vector alrite_predict(const AlriteModel& model, const Matrix& x) {
  return aggregate_tau(predict_eta(model.eta, x, model.clip), predict_tau(model.p0, x),
                       predict_tau(model.p1, x));
}

EtaSensitivity eta_sensitivity(const Vector& eta_hat, const Vector& eta, const Vector& tau0,
                               const Vector& tau1, const Vector& tau) {
  const Index n = eta_hat.size();
  if (eta.size() != n || tau0.size() != n || tau1.size() != n || tau.size() != n)
    throw ShapeError("sensitivity: length mismatch");
  EtaSensitivity out;
  out.lhs = (aggregate_tau(eta_hat, tau0, tau1) - aggregate_tau(eta, tau0, tau1)).norm();
  out.rhs = (eta_hat - eta).norm() * ((tau0 - tau).norm() + (tau1 - tau).norm());
  return out;
}

EtaSensitivity eta_sensitivity_check(const AlriteModel& model, const Vector& true_eta,
                                     const Matrix& x, const Vector& true_tau) {
  if (true_eta.size() == 0 || true_tau.size() == 0)
    throw PreconditionError("sensitivity: ground-truth propensity and effect are required");
  return eta_sensitivity(predict_eta(model.eta, x, model.clip), true_eta, predict_tau(model.p0, x),
                         predict_tau(model.p1, x), true_tau);
}

// ---------------------------------------------------------------------------

Vector softmax_weights(const Vector& risk, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("softmax: lambda must be positive");
  if (risk.size() == 0) throw PreconditionError("softmax: no members");
  if (!risk.allFinite()) throw NumericError("softmax: non-finite member risk");
  const Vector logits = -lambda * risk;
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Vector topk_weights(Index members, Index k) {
  if (k < 1 || k > members) throw PreconditionError("top-k: K out of range");
  Vector w = Vector::Zero(members);
  w.head(k).setConstant(1.0 / static_cast<double>(k));
  return w;
}

std::string to_string(EnsembleMode mode) { return mode == EnsembleMode::top_k ? "top_k" : "softmax"; }

Vector EnsembleModel::weights0() const {
  return mode == EnsembleMode::top_k ? topk_weights(risk0.size(), k) : softmax_weights(risk0, lambda);
}

Vector EnsembleModel::weights1() const {
  return mode == EnsembleMode::top_k ? topk_weights(risk1.size(), k) : softmax_weights(risk1, lambda);
}

namespace {

void check_members(const std::vector<Pipeline>& members, const Vector& risk) {
  if (members.empty()) throw PreconditionError("ensemble: no members");
  if (static_cast<Index>(members.size()) != risk.size()) throw ShapeError("ensemble: risk count mismatch");
  for (Index i = 1; i < risk.size(); ++i)
    if (risk(i) < risk(i - 1)) throw PreconditionError("ensemble: members must be sorted by risk");
}

}  // namespace

EnsembleModel build_topk_ensemble(std::vector<Pipeline> members0, Vector risk0,
                                  std::vector<Pipeline> members1, Vector risk1,
                                  PropensityModel eta, Index k, double clip) {
  check_members(members0, risk0);
  check_members(members1, risk1);
  if (k < 1 || k > std::min(risk0.size(), risk1.size())) throw PreconditionError("top-k: K out of range");
  return EnsembleModel{std::move(members0), std::move(members1), std::move(risk0), std::move(risk1),
                       std::move(eta), clip, EnsembleMode::top_k, k, 1.0};
}

EnsembleModel build_softmax_ensemble(std::vector<Pipeline> members0, Vector risk0,
                                     std::vector<Pipeline> members1, Vector risk1,
                                     PropensityModel eta, double lambda, double clip) {
  check_members(members0, risk0);
  check_members(members1, risk1);
  softmax_weights(risk0, lambda);
  softmax_weights(risk1, lambda);
  return EnsembleModel{std::move(members0), std::move(members1), std::move(risk0), std::move(risk1),
                       std::move(eta), clip, EnsembleMode::softmax, 1, lambda};
}

namespace {

Vector weighted_tau(const std::vector<Pipeline>& members, const Vector& w, const Matrix& x) {
  Vector out = Vector::Zero(x.rows());
  for (std::size_t i = 0; i < members.size(); ++i)
    if (w(static_cast<Index>(i)) != 0.0) out += w(static_cast<Index>(i)) * predict_tau(members[i], x);
  return out;
}

}  // namespace

Vector ensemble_predict(const EnsembleModel& model, const Matrix& x) {
  return aggregate_tau(predict_eta(model.eta, x, model.clip), weighted_tau(model.members0, model.weights0(), x),
                       weighted_tau(model.members1, model.weights1(), x));
}

IndexList risk_order(const Vector& risk) {
  IndexList order(static_cast<std::size_t>(risk.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return risk(a) < risk(b); });
  return order;
}

ArmBank make_arm_bank(std::span<const Pipeline> members, const Vector& risk, const Matrix& x) {
  if (static_cast<Index>(members.size()) != risk.size()) throw ShapeError("bank: risk count mismatch");
  const IndexList order = risk_order(risk);
  ArmBank bank;
  bank.mu0.resize(risk.size(), x.rows());
  bank.mu1.resize(risk.size(), x.rows());
  bank.risk.resize(risk.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Pipeline& p = members[static_cast<std::size_t>(order[r])];
    bank.mu0.row(static_cast<Index>(r)) = predict_mu(p, x, 0).transpose();
    bank.mu1.row(static_cast<Index>(r)) = predict_mu(p, x, 1).transpose();
    bank.risk(static_cast<Index>(r)) = risk(order[r]);
  }
  return bank;
}

Combined combine(const ArmBank& bank0, const Vector& w0, const ArmBank& bank1, const Vector& w1,
                 const Vector& eta, std::span<const int> t) {
  const Index n = eta.size();
  if (bank0.mu0.cols() != n || bank1.mu0.cols() != n || static_cast<Index>(t.size()) != n)
    throw ShapeError("combine: sample count mismatch");
  if (w0.size() != bank0.mu0.rows() || w1.size() != bank1.mu0.rows())
    throw ShapeError("combine: weight count mismatch");
  const Vector a0 = bank0.mu0.transpose() * w0, a1 = bank0.mu1.transpose() * w0;
  const Vector b0 = bank1.mu0.transpose() * w1, b1 = bank1.mu1.transpose() * w1;
  Combined out;
  out.tau = aggregate_tau(eta, a1 - a0, b1 - b0);
  out.factual.resize(n);
  for (Index i = 0; i < n; ++i) {
    const bool treated = t[static_cast<std::size_t>(i)] == 1;
    out.factual(i) = (1.0 - eta(i)) * (treated ? a1(i) : a0(i)) + eta(i) * (treated ? b1(i) : b0(i));
  }
  return out;
}

namespace {

double factual_risk(const Combined& c, const Vector& y) {
  return (y - c.factual).squaredNorm() / static_cast<double>(y.size());
}

// Risks equal up to rounding count as ties.
bool strictly_better(double risk, double best) {
  return std::isinf(best) || risk < best - 1e-12 * std::max(1.0, std::abs(best));
}

}  // namespace

EnsembleChoice select_topk(const ArmBank& bank0, const ArmBank& bank1, const Vector& eta,
                           std::span<const int> t, const Vector& y) {
  const Index kmax = std::min(bank0.risk.size(), bank1.risk.size());
  if (kmax < 1) throw PreconditionError("top-k: no members");
  EnsembleChoice choice;
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 1; k <= kmax; ++k) {
    const Combined c = combine(bank0, topk_weights(bank0.risk.size(), k), bank1,
                               topk_weights(bank1.risk.size(), k), eta, t);
    const double risk = factual_risk(c, y);
    choice.curve.push_back({static_cast<double>(k), risk, std::nullopt});
    if (strictly_better(risk, best)) {
      best = risk;
      choice.param = static_cast<double>(k);
    }
  }
  return choice;
}

EnsembleChoice select_softmax(const ArmBank& bank0, const ArmBank& bank1, const Vector& eta,
                              std::span<const int> t, const Vector& y,
                              std::span<const double> lambdas) {
  if (lambdas.empty()) throw PreconditionError("softmax: empty lambda grid");
  std::vector<double> grid(lambdas.begin(), lambdas.end());
  std::sort(grid.begin(), grid.end());
  EnsembleChoice choice;
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    const Combined c = combine(bank0, softmax_weights(bank0.risk, lambda), bank1,
                               softmax_weights(bank1.risk, lambda), eta, t);
    const double risk = factual_risk(c, y);
    choice.curve.push_back({lambda, risk, std::nullopt});
    if (strictly_better(risk, best)) {
      best = risk;
      choice.param = lambda;
    }
  }
  return choice;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int k = -2; k <= 16; ++k) grid.push_back(std::pow(10.0, k / 2.0));
  return grid;
}

nlohmann::json to_json(const AlriteModel& model) {
  return {{"p0", to_json(model.p0)},
          {"p1", to_json(model.p1)},
          {"eta", to_json(model.eta)},
          {"clip", model.clip},
          {"retained_epoch0", model.report0.retained_epoch},
          {"retained_epoch1", model.report1.retained_epoch}};
}

AlriteModel alrite_from_json(const nlohmann::json& doc) {
  AlriteModel model;
  model.p0 = pipeline_from_json(doc.at("p0"));
  model.p1 = pipeline_from_json(doc.at("p1"));
  if (model.p0.role != Role::control_driven || model.p1.role != Role::treatment_driven)
    throw ConfigError("model", "pipeline roles are swapped");
  model.eta = propensity_from_json(doc.at("eta"));
  model.clip = doc.value("clip", kDefaultEtaClip);
  return model;
}

}  // namespace alrite
