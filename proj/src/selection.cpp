#include "alrite/selection.hpp"

#include "alrite/twin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alrite {

namespace {

Matrix rbf(const Matrix& a, const Matrix& b, double bandwidth) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix sq = (-2.0 * a * b.transpose()).colwise() + na;
  sq.rowwise() += nb.transpose();
  const double scale = -0.5 / (bandwidth * bandwidth);
  return (sq.array().max(0.0) * scale).exp().matrix();
}

Vector solve_ridge(const Matrix& kernel, const Vector& y, double ridge) {
  Matrix system = kernel;
  system.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) throw NumericError("kernel ridge: system is not positive definite");
  return llt.solve(y);
}

double median_distance(const Matrix& x) {
  std::vector<double> d;
  const Index n = std::min<Index>(x.rows(), 300);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double med = d[d.size() / 2];
  return med > 0.0 ? med : 1.0;
}

}  // namespace

KernelRidge fit_kernel_ridge(const Dataset& data, std::span<const Index> indices,
                             const KernelRidgeGrid& grid, std::uint64_t seed) {
  if (indices.size() < 2) throw PreconditionError("kernel ridge: need at least 2 rows");
  if (grid.relative_bandwidths.empty() || grid.ridges.empty())
    throw ConfigError("kernel_ridge.grid", "must not be empty");
  KernelRidge model;
  model.scaler = fit_scaler(data, indices);
  model.scaler.y_shift = 0.0;
  model.scaler.y_scale = 1.0;
  const Dataset part = data.subset(indices);
  const Matrix x = model.scaler.transform_x(part.x);
  model.y_mean = part.y.mean();
  const Vector y = part.y.array() - model.y_mean;
  const double base = median_distance(x);

  const Index n = x.rows();
  const int folds = static_cast<int>(std::min<Index>(grid.folds, n));
  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, 0x6e7ULL));
  std::shuffle(order.begin(), order.end(), rng);

  double best = std::numeric_limits<double>::infinity();
  model.bandwidth = base * grid.relative_bandwidths.front();
  model.ridge = grid.ridges.front();
  if (folds >= 2) {
    for (double rel : grid.relative_bandwidths) {
      const double bw = base * rel;
      const Matrix kernel = rbf(x, x, bw);
      std::vector<double> errors(grid.ridges.size(), 0.0);
      for (int f = 0; f < folds; ++f) {
        IndexList fit_rows, held;
        for (std::size_t k = 0; k < order.size(); ++k)
          (static_cast<int>(k % static_cast<std::size_t>(folds)) == f ? held : fit_rows).push_back(order[k]);
        Matrix k_fit(static_cast<Index>(fit_rows.size()), static_cast<Index>(fit_rows.size()));
        Matrix k_held(static_cast<Index>(held.size()), static_cast<Index>(fit_rows.size()));
        Vector y_fit(static_cast<Index>(fit_rows.size()));
        for (std::size_t a = 0; a < fit_rows.size(); ++a) {
          y_fit(static_cast<Index>(a)) = y(fit_rows[a]);
          for (std::size_t b = 0; b < fit_rows.size(); ++b)
            k_fit(static_cast<Index>(a), static_cast<Index>(b)) = kernel(fit_rows[a], fit_rows[b]);
          for (std::size_t h = 0; h < held.size(); ++h)
            k_held(static_cast<Index>(h), static_cast<Index>(a)) = kernel(held[h], fit_rows[a]);
        }
        for (std::size_t r = 0; r < grid.ridges.size(); ++r) {
          const Vector pred = k_held * solve_ridge(k_fit, y_fit, grid.ridges[r]);
          for (std::size_t h = 0; h < held.size(); ++h) {
            const double e = pred(static_cast<Index>(h)) - y(held[h]);
            errors[r] += e * e;
          }
        }
      }
      for (std::size_t r = 0; r < grid.ridges.size(); ++r) {
        if (errors[r] < best) {
          best = errors[r];
          model.bandwidth = bw;
          model.ridge = grid.ridges[r];
        }
      }
    }
  }
  model.train_x = x;
  model.coef = solve_ridge(rbf(x, x, model.bandwidth), y, model.ridge);
  return model;
}

Vector predict(const KernelRidge& model, const Matrix& x) {
  const Matrix z = model.scaler.transform_x(x);
  if (z.cols() != model.train_x.cols()) throw ShapeError("kernel ridge: covariate width mismatch");
  return (rbf(z, model.train_x, model.bandwidth) * model.coef).array() + model.y_mean;
}

Auxiliaries fit_auxiliaries(const Dataset& data, std::span<const Index> train, std::uint64_t seed,
                            const std::vector<PropensitySpec>& grid, double clip) {
  IndexList control, treated;
  for (Index i : train) (data.t[static_cast<std::size_t>(i)] == 1 ? treated : control).push_back(i);
  if (control.empty() || treated.empty()) throw StructuralError("auxiliaries: a treatment arm is empty");
  Auxiliaries aux;
  const KernelRidgeGrid kr;
  aux.mu0 = fit_kernel_ridge(data, control, kr, derive_seed(seed, 0xa0ULL));
  aux.mu1 = fit_kernel_ridge(data, treated, kr, derive_seed(seed, 0xa1ULL));
  aux.m = fit_kernel_ridge(data, train, kr, derive_seed(seed, 0xa2ULL));
  aux.eta = select_propensity(data, train, grid, 5, derive_seed(seed, 0xa3ULL), clip).model;
  aux.instance_scaler = fit_scaler(data, train);
  aux.clip = clip;
  return aux;
}

AuxiliaryPredictions predict_auxiliaries(const Auxiliaries& aux, const Dataset& validation) {
  validation.require_both_arms();
  AuxiliaryPredictions out;
  out.mu0 = predict(aux.mu0, validation.x);
  out.mu1 = predict(aux.mu1, validation.x);
  out.m = predict(aux.m, validation.x);
  out.eta = predict_eta(aux.eta, validation.x, aux.clip);
  const TwinMap nn = mirror_twins(aux.instance_scaler.transform_x(validation.x), validation.t);
  out.nn_outcome.resize(validation.size());
  for (Index i = 0; i < validation.size(); ++i)
    out.nn_outcome(i) = validation.y(nn.twin_index[static_cast<std::size_t>(i)]);
  return out;
}

std::string to_string(ProxyKind kind) {
  switch (kind) {
    case ProxyKind::mu_risk: return "mu_risk";
    case ProxyKind::mu_risk_iptw: return "mu_risk_iptw";
    case ProxyKind::r_risk: return "r_risk";
    case ProxyKind::tau_naive: return "tau_naive";
    case ProxyKind::tau_1nni: return "tau_1nni";
    case ProxyKind::tau_iptw: return "tau_iptw";
    case ProxyKind::tau_u: return "tau_u";
    case ProxyKind::tau_dr: return "tau_dr";
  }
  return "mu_risk";
}

ProxyKind parse_proxy(const std::string& name) {
  for (ProxyKind kind : all_proxy_kinds())
    if (to_string(kind) == name) return kind;
  throw ConfigError("selection.proxy", "unknown proxy '" + name + "'");
}

std::vector<ProxyKind> all_proxy_kinds() {
  return {ProxyKind::mu_risk,  ProxyKind::mu_risk_iptw, ProxyKind::r_risk, ProxyKind::tau_naive,
          ProxyKind::tau_1nni, ProxyKind::tau_iptw,     ProxyKind::tau_u,  ProxyKind::tau_dr};
}

double proxy_score(ProxyKind kind, const CandidatePredictions& candidate, const Dataset& validation,
                   const AuxiliaryPredictions& aux) {
  const Index n = validation.size();
  if (n == 0) throw PreconditionError("proxy: empty validation set");
  if (aux.eta.size() != n) throw ShapeError("proxy: auxiliary predictions do not match the validation set");
  const bool needs_factual = kind == ProxyKind::mu_risk || kind == ProxyKind::mu_risk_iptw || kind == ProxyKind::tau_dr;
  const bool needs_tau = kind != ProxyKind::mu_risk && kind != ProxyKind::mu_risk_iptw;
  if (needs_factual && !candidate.factual)
    throw KindMismatchError("proxy " + to_string(kind) + " needs factual predictions");
  if (needs_tau && !candidate.tau)
    throw KindMismatchError("proxy " + to_string(kind) + " needs effect predictions");
  if ((candidate.factual && candidate.factual->size() != n) || (candidate.tau && candidate.tau->size() != n))
    throw ShapeError("proxy: candidate predictions do not match the validation set");

  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int t = validation.t[static_cast<std::size_t>(i)];
    const double y = validation.y(i);
    const double eta = aux.eta(i);
    const double sign = 2.0 * t - 1.0;
    const double rho_t = t == 1 ? 1.0 / eta : 1.0 / (1.0 - eta);
    const double rho_other = t == 1 ? 1.0 / (1.0 - eta) : 1.0 / eta;
    double term = 0.0;
    switch (kind) {
      case ProxyKind::mu_risk: {
        const double r = y - (*candidate.factual)(i);
        term = r * r;
        break;
      }
      case ProxyKind::mu_risk_iptw: {
        const double r = y - (*candidate.factual)(i);
        term = rho_t * r * r;
        break;
      }
      case ProxyKind::r_risk: {
        const double r = (*candidate.tau)(i) * (t - eta) - (y - aux.m(i));
        term = r * r;
        break;
      }
      case ProxyKind::tau_naive: {
        const double r = (*candidate.tau)(i) - (aux.mu1(i) - aux.mu0(i));
        term = r * r;
        break;
      }
      case ProxyKind::tau_1nni: {
        const double r = (*candidate.tau)(i) - sign * (y - aux.nn_outcome(i));
        term = r * r;
        break;
      }
      case ProxyKind::tau_iptw: {
        const double r = (*candidate.tau)(i) - sign * rho_t * y;
        term = r * r;
        break;
      }
      case ProxyKind::tau_u: {
        const double r = (*candidate.tau)(i) - sign * rho_other * (y - aux.m(i));
        term = r * r;
        break;
      }
      case ProxyKind::tau_dr: {
        const double pseudo = (aux.mu1(i) - aux.mu0(i)) + sign * rho_t * (y - (*candidate.factual)(i));
        const double r = (*candidate.tau)(i) - pseudo;
        term = r * r;
        break;
      }
    }
    total += term;
  }
  return total / static_cast<double>(n);
}

Vector average_ranks(const Vector& values) {
  const Index n = values.size();
  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
  Vector ranks(n);
  for (Index start = 0; start < n;) {
    Index stop = start + 1;
    while (stop < n && values(order[static_cast<std::size_t>(stop)]) == values(order[static_cast<std::size_t>(start)])) ++stop;
    const double rank = 0.5 * static_cast<double>(start + 1 + stop);
    for (Index k = start; k < stop; ++k) ranks(order[static_cast<std::size_t>(k)]) = rank;
    start = stop;
  }
  return ranks;
}

RankAgreement rank_agreement(const Vector& u, const Vector& v, int p) {
  if (u.size() != v.size()) throw ShapeError("rank agreement: length mismatch");
  const Index c = u.size();
  if (c < 2) throw PreconditionError("rank agreement: need at least 2 items");
  RankAgreement out;

  const Vector ru = average_ranks(u), rv = average_ranks(v);
  const Vector du = ru.array() - ru.mean(), dv = rv.array() - rv.mean();
  const double denom = std::sqrt(du.squaredNorm() * dv.squaredNorm());
  out.spearman = denom > 0.0 ? du.dot(dv) / denom : 0.0;

  double score = 0.0;
  for (Index i = 0; i < c; ++i) {
    for (Index j = i + 1; j < c; ++j) {
      const double a = u(i) - u(j), b = v(i) - v(j);
      if (a * b > 0.0) score += 1.0;
      else if (a * b < 0.0) score -= 1.0;
    }
  }
  out.kendall = score / (0.5 * static_cast<double>(c) * static_cast<double>(c - 1));

  IndexList by_u(static_cast<std::size_t>(c));
  std::iota(by_u.begin(), by_u.end(), Index{0});
  std::stable_sort(by_u.begin(), by_u.end(), [&](Index a, Index b) { return u(a) < u(b); });
  const Index items = p <= 0 ? c : std::min<Index>(p, c);
  for (Index j = 1; j <= items; ++j) {
    const double m = (rv(by_u[static_cast<std::size_t>(j - 1)]) - 1.0) / static_cast<double>(c - 1);
    out.dcg += std::pow(2.0, m) / std::log(static_cast<double>(j) + 1.0);
  }
  return out;
}

CandidateSelection select_candidate(std::span<const CandidatePredictions> candidates,
                                    ProxyKind kind, const Dataset& validation,
                                    const AuxiliaryPredictions& aux) {
  if (candidates.empty()) throw PreconditionError("selection: no candidates");
  CandidateSelection out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double score = proxy_score(kind, candidates[c], validation, aux);
    out.scores.push_back(score);
    if (score < best) {
      best = score;
      out.winner = c;
    }
  }
  return out;
}

}  // namespace alrite
