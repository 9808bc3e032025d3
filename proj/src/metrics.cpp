#include "alrite/metrics.hpp"

#include "alrite/twin.hpp"

#include <algorithm>
#include <cmath>

namespace alrite {

namespace {

Vector gather(const Vector& v, std::span<const Index> indices) {
  Vector out(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) out(static_cast<Index>(k)) = v(indices[k]);
  return out;
}

void check_pair(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("metrics: length mismatch");
  if (a.size() == 0) throw PreconditionError("metrics: empty sample");
}

}  // namespace

double pehe(const Vector& tau_hat, const Vector& tau) {
  check_pair(tau_hat, tau);
  return (tau - tau_hat).squaredNorm() / static_cast<double>(tau.size());
}

double pehe(const Vector& tau_hat, const GroundTruth& truth, std::span<const Index> indices) {
  if (indices.empty()) throw PreconditionError("pehe: empty index set");
  return pehe(tau_hat.size() == static_cast<Index>(indices.size()) ? tau_hat : gather(tau_hat, indices),
              gather(truth.tau, indices));
}

double eps_ate(const Vector& tau_hat, const Vector& tau) {
  check_pair(tau_hat, tau);
  return std::abs(tau_hat.mean() - tau.mean());
}

double eps_ate(const Vector& tau_hat, const GroundTruth& truth, std::span<const Index> indices) {
  if (indices.empty()) throw PreconditionError("eps_ate: empty index set");
  return eps_ate(tau_hat.size() == static_cast<Index>(indices.size()) ? tau_hat : gather(tau_hat, indices),
                 gather(truth.tau, indices));
}

PolicyRisks policy_risks(const Vector& tau_hat, const Dataset& data, const GroundTruth* truth) {
  data.validate();
  const Index n = data.size();
  if (tau_hat.size() != n) throw ShapeError("policy risk: length mismatch");
  if (n == 0) throw PreconditionError("policy risk: empty sample");
  if (truth && truth->size() != n) throw ShapeError("policy risk: ground truth length mismatch");
  PolicyRisks out;
  Index treat = 0;
  double sum_y1_treat = 0.0, sum_y0_keep = 0.0;
  double obs_treat = 0.0, obs_keep = 0.0;
  Index n_obs_treat = 0, n_obs_keep = 0;
  for (Index i = 0; i < n; ++i) {
    const bool policy = tau_hat(i) > 0.0;
    const int t = data.t[static_cast<std::size_t>(i)];
    if (policy) {
      ++treat;
      if (truth) sum_y1_treat += truth->mu1(i);
      if (t == 1) {
        obs_treat += data.y(i);
        ++n_obs_treat;
      }
    } else {
      if (truth) sum_y0_keep += truth->mu0(i);
      if (t == 0) {
        obs_keep += data.y(i);
        ++n_obs_keep;
      }
    }
  }
  const double p_treat = static_cast<double>(treat) / static_cast<double>(n);
  const Index keep = n - treat;
  if (truth) {
    const double e1 = treat > 0 ? sum_y1_treat / static_cast<double>(treat) : 0.0;
    const double e0 = keep > 0 ? sum_y0_keep / static_cast<double>(keep) : 0.0;
    out.rpol = 1.0 - p_treat * e1 - (1.0 - p_treat) * e0;
  }
  const double o1 = n_obs_treat > 0 ? obs_treat / static_cast<double>(n_obs_treat) : 0.0;
  const double o0 = n_obs_keep > 0 ? obs_keep / static_cast<double>(n_obs_keep) : 0.0;
  out.empty_cell = (treat > 0 && n_obs_treat == 0) || (keep > 0 && n_obs_keep == 0);
  out.orpol = 1.0 - p_treat * o1 - (1.0 - p_treat) * o0;
  return out;
}

// ---------------------------------------------------------------------------
// Bounds. Everything is evaluated in original outcome units; heads map latent
// points to original units, so their Lipschitz constants carry y_scale.

namespace {

void check_truth(const Dataset& data, const GroundTruth& truth) {
  data.require_both_arms();
  if (truth.size() != data.size()) throw ShapeError("bound: ground truth length mismatch");
  if (truth.size() == 0) throw PreconditionError("bound: ground truth is required");
}

double head_lipschitz(const Pipeline& p, int arm) {
  return p.scaler.y_scale * nn::lipschitz_upper_bound(p.head(arm));
}

double lipschitz_or_zero(const std::optional<double>& lipschitz) {
  if (!lipschitz) return 0.0;
  if (!(*lipschitz >= 0.0) || !std::isfinite(*lipschitz))
    throw PreconditionError("bound: Lipschitz constant must be finite and >= 0");
  return *lipschitz;
}

void finalize(BoundReport& r) { r.slack = r.bound - r.pehe; }

// Pipeline whose heads output original units, for use on pre-standardized x.
Pipeline in_original_units(const Pipeline& p) {
  Pipeline q = p;
  for (nn::Mlp* head : {&q.h0, &q.h1}) {
    nn::Layer& last = head->layers.back();
    last.weight *= p.scaler.y_scale;
    last.bias = (last.bias.array() * p.scaler.y_scale + p.scaler.y_shift).matrix();
  }
  q.scaler = Scaler{};
  return q;
}

struct CrossTerms {
  Vector tau_bar;
  TwinMap twins;       // cross-pipeline votes, distances under the own-arm embedding
  double cross_weighted = 0.0;  // sum_{t=1} w (h01 - y)^2 + sum_{t=0} w (h10 - y)^2
  double cross_plain = 0.0;     // same without weights
  double own_driving0 = 0.0;    // sum_{t=0} (h00 - y)^2
  double own_driving1 = 0.0;    // sum_{t=1} (h11 - y)^2
  double distances = 0.0;       // sum |phi_t(x) - phi_t(x^m)|^2
  double kappa = 0.0;
  double lhat = 0.0;
};

CrossTerms cross_terms(const Pipeline& p0, const Pipeline& p1, const Dataset& data,
                       const GroundTruth& truth) {
  CrossTerms c;
  const Matrix z0 = embed(p0, data.x);
  const Matrix z1 = embed(p1, data.x);
  c.twins = cross_pipeline_weights(z0, z1, data.t);
  const Vector h00 = predict_mu(p0, data.x, 0), h01 = predict_mu(p0, data.x, 1);
  const Vector h10 = predict_mu(p1, data.x, 0), h11 = predict_mu(p1, data.x, 1);
  c.tau_bar.resize(data.size());
  for (Index i = 0; i < data.size(); ++i) {
    const double y = data.y(i);
    const double w = static_cast<double>(c.twins.weight[static_cast<std::size_t>(i)]);
    if (data.t[static_cast<std::size_t>(i)] == 1) {
      c.tau_bar(i) = y - h10(i);
      c.cross_weighted += w * (h01(i) - y) * (h01(i) - y);
      c.cross_plain += (h01(i) - y) * (h01(i) - y);
      c.own_driving1 += (h11(i) - y) * (h11(i) - y);
      c.kappa += (1.0 + w) * (y - truth.mu1(i)) * (y - truth.mu1(i));
    } else {
      c.tau_bar(i) = h01(i) - y;
      c.cross_weighted += w * (h10(i) - y) * (h10(i) - y);
      c.cross_plain += (h10(i) - y) * (h10(i) - y);
      c.own_driving0 += (h00(i) - y) * (h00(i) - y);
      c.kappa += (1.0 + w) * (y - truth.mu0(i)) * (y - truth.mu0(i));
    }
    c.distances += c.twins.twin_distance(i) * c.twins.twin_distance(i);
  }
  c.lhat = std::max(head_lipschitz(p0, 1), head_lipschitz(p1, 0));
  return c;
}

}  // namespace

BoundReport bound_m1(const Pipeline& p, const Dataset& data, const GroundTruth& truth,
                     std::optional<double> lipschitz) {
  check_truth(data, truth);
  const double l = lipschitz_or_zero(lipschitz);
  const double lhat = std::max(head_lipschitz(p, 0), head_lipschitz(p, 1));
  const Matrix z = embed(p, data.x);
  const TwinMap twins = mirror_twins(z, data.t);
  const Vector factual = predict_factual(p, data.x, data.t);
  double weighted = 0.0, distances = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    const double r = factual(i) - data.y(i);
    weighted += (1.0 + static_cast<double>(twins.weight[static_cast<std::size_t>(i)])) * r * r;
    distances += twins.twin_distance(i) * twins.twin_distance(i);
  }
  const double n = static_cast<double>(data.size());
  BoundReport r;
  r.theorem = "M1";
  r.certified = lipschitz.has_value();
  r.terms["weighted_factual"] = 4.0 / n * weighted;
  r.terms["lipschitz_twin"] = 4.0 / n * (l * l + lhat * lhat) * distances;
  r.terms["L"] = l;
  r.terms["L_hat"] = lhat;
  r.bound = r.terms["weighted_factual"] + r.terms["lipschitz_twin"];
  r.pehe = pehe(predict_tau(p, data.x), truth.tau);
  finalize(r);
  return r;
}

BoundReport bound_m2(const Pipeline& p0, const Pipeline& p1, const Dataset& data,
                     const GroundTruth& truth, std::optional<double> lipschitz) {
  check_truth(data, truth);
  const double l = lipschitz_or_zero(lipschitz);
  const CrossTerms c = cross_terms(p0, p1, data, truth);
  const double n = static_cast<double>(data.size());
  BoundReport r;
  r.theorem = "M2";
  r.certified = lipschitz.has_value();
  r.terms["weighted_cross_factual"] = 5.0 / n * c.cross_weighted;
  r.terms["lipschitz_twin"] = 5.0 / n * (l * l + c.lhat * c.lhat) * c.distances;
  r.terms["kappa_y"] = 5.0 / n * c.kappa;
  r.terms["L"] = l;
  r.terms["L_hat"] = c.lhat;
  r.bound = r.terms["weighted_cross_factual"] + r.terms["lipschitz_twin"] + r.terms["kappa_y"];
  r.pehe = pehe(c.tau_bar, truth.tau);
  finalize(r);
  return r;
}

BoundReport bound_m3(const Pipeline& p0, const Pipeline& p1, const Dataset& data,
                     const GroundTruth& truth, std::optional<double> lipschitz, double gamma0,
                     double gamma1) {
  check_truth(data, truth);
  if (p0.role != Role::control_driven || p1.role != Role::treatment_driven)
    throw PreconditionError("bound: expected a control-driven and a treatment-driven pipeline");
  const double l = lipschitz_or_zero(lipschitz);
  const CrossTerms c = cross_terms(p0, p1, data, truth);
  const double n = static_cast<double>(data.size());
  const double n1 = static_cast<double>(data.n_treated());
  const double n0 = n - n1;
  const double p = n1 / n;
  const double strength = l * l + c.lhat * c.lhat;

  // Each compound loss on original outcomes with the theorem's settings.
  const auto loss = [&](const Pipeline& pipe, double alpha, double gamma) {
    PipelineHyperparams hp;
    hp.alpha = alpha;
    hp.beta = 1.0;
    hp.gamma = gamma;
    Dataset local = data;
    local.x = pipe.scaler.transform_x(data.x);
    const Pipeline orig = in_original_units(pipe);
    const TwinMap twins = mirror_twins(nn::forward_batch(orig.phi, local.x), local.t);
    return compound_loss(orig, local, twins, hp);
  };
  const LossBreakdown l0 = loss(p0, (1.0 - p) * strength, gamma0);
  const LossBreakdown l1 = loss(p1, p * strength, gamma1);

  BoundReport r;
  r.theorem = "M3";
  r.certified = lipschitz.has_value();
  r.terms["loss0"] = l0.total;
  r.terms["loss1"] = l1.total;
  r.terms["regularization"] = l0.regularization + l1.regularization;
  r.terms["kappa_y"] = c.kappa;
  r.terms["own_factual"] = c.own_driving0 / n0 + c.own_driving1 / n1;
  r.terms["cross_factual"] = c.cross_plain / n;
  r.terms["L"] = l;
  r.terms["L_hat"] = c.lhat;
  r.bound = 5.0 * (l0.total + l1.total - r.terms["regularization"] + c.kappa -
                   r.terms["own_factual"] - r.terms["cross_factual"]);
  r.pehe = pehe(c.tau_bar, truth.tau);
  finalize(r);
  return r;
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [name, value] : report.terms) terms[name] = value;
  return {{"theorem", report.theorem}, {"bound", report.bound},   {"pehe", report.pehe},
          {"slack", report.slack},     {"certified", report.certified}, {"terms", terms}};
}

// ---------------------------------------------------------------------------

LemmaCheck latent_minimizer_sanity(const DiscreteToy& toy) {
  if (toy.cells.empty()) throw PreconditionError("lemma check: empty covariate space");
  std::map<int, std::vector<const DiscreteCell*>> by_latent;
  for (const DiscreteCell& cell : toy.cells) {
    if (!(cell.mass >= 0.0) || !(cell.p_control >= 0.0 && cell.p_control <= 1.0) || !(cell.var0 >= 0.0))
      throw PreconditionError("lemma check: invalid cell probabilities or variance");
    by_latent[cell.latent].push_back(&cell);
  }
  LemmaCheck out;
  out.hypothesis_holds = true;
  out.minimizer_matches = true;
  for (const auto& [latent, cells] : by_latent) {
    double lo = cells.front()->mu0, hi = lo;
    for (const DiscreteCell* c : cells) {
      lo = std::min(lo, c->mu0);
      hi = std::max(hi, c->mu0);
    }
    if (hi != lo) out.hypothesis_holds = false;

    // Candidate values: every tabulated mean plus a fine grid spanning them.
    std::vector<double> candidates;
    for (const DiscreteCell* c : cells) candidates.push_back(c->mu0);
    constexpr int kGrid = 1000;
    for (int g = 0; g <= kGrid; ++g) candidates.push_back(lo + (hi - lo) * g / kGrid);
    const auto risk = [&](double v) {
      double total = 0.0;
      for (const DiscreteCell* c : cells)
        total += c->mass * c->p_control * ((v - c->mu0) * (v - c->mu0) + c->var0);
      return total;
    };
    double best_value = candidates.front();
    double best_risk = risk(best_value);
    for (double v : candidates) {
      const double r = risk(v);
      if (r < best_risk) {
        best_risk = r;
        best_value = v;
      }
    }
    for (const DiscreteCell* c : cells)
      if (c->mass * c->p_control > 0.0 && std::abs(best_value - c->mu0) > 1e-12)
        out.minimizer_matches = false;
  }
  return out;
}

}  // namespace alrite
