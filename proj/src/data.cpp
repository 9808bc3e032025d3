#include "alrite/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace alrite {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::binary: return "binary";
    case FeatureKind::count: return "count";
  }
  return "continuous";
}

// ---------------------------------------------------------------------------
// Dataset / GroundTruth

Index Dataset::n_treated() const {
  return static_cast<Index>(std::count(t.begin(), t.end(), 1));
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  Dataset out;
  out.x.resize(static_cast<Index>(indices.size()), dim());
  out.y.resize(static_cast<Index>(indices.size()));
  out.t.resize(indices.size());
  out.kinds = kinds;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    if (i < 0 || i >= size()) throw PreconditionError("subset index out of range");
    out.x.row(static_cast<Index>(k)) = x.row(i);
    out.y(static_cast<Index>(k)) = y(i);
    out.t[k] = t[static_cast<std::size_t>(i)];
  }
  return out;
}

IndexList Dataset::arm_indices(int arm) const {
  IndexList out;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] == arm) out.push_back(static_cast<Index>(i));
  return out;
}

void Dataset::validate() const {
  if (static_cast<Index>(t.size()) != size() || y.size() != size())
    throw ShapeError("dataset: x, t and y lengths differ");
  if (static_cast<Index>(kinds.size()) != dim())
    throw ShapeError("dataset: feature kind list does not match column count");
  for (int flag : t)
    if (flag != 0 && flag != 1) throw PreconditionError("dataset: treatment flags must be 0 or 1");
  if (!x.allFinite() || !y.allFinite()) throw NumericError("dataset: non-finite entry");
}

void Dataset::require_both_arms() const {
  validate();
  const Index n1 = n_treated();
  if (n1 == 0 || n1 == size()) throw StructuralError("dataset: a treatment arm is empty");
}

GroundTruth GroundTruth::from_surfaces(Vector mu0, Vector mu1) {
  if (mu0.size() != mu1.size()) throw ShapeError("ground truth: surface lengths differ");
  GroundTruth truth{std::move(mu0), std::move(mu1), Vector()};
  truth.tau = truth.mu1 - truth.mu0;
  return truth;
}

GroundTruth GroundTruth::subset(std::span<const Index> indices) const {
  Vector a(static_cast<Index>(indices.size())), b(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    a(static_cast<Index>(k)) = mu0(indices[k]);
    b(static_cast<Index>(k)) = mu1(indices[k]);
  }
  return from_surfaces(std::move(a), std::move(b));
}

namespace {

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

bool both_arms(const std::vector<int>& t) {
  const auto n1 = std::count(t.begin(), t.end(), 1);
  return n1 > 0 && n1 < static_cast<long>(t.size());
}

constexpr int kMaxAttempts = 10;

}  // namespace

// ---------------------------------------------------------------------------
// IHDP-like

Synthetic generate_ihdp_like(std::uint64_t seed, Index n, Index d, double p_treat) {
  IhdpConfig config;
  config.n = n;
  config.d = d;
  config.n_continuous = std::min<Index>(config.n_continuous, d);
  config.p_treat = p_treat;
  return generate_ihdp_like(seed, config);
}

Synthetic generate_ihdp_like(std::uint64_t seed, const IhdpConfig& config) {
  if (config.n < 20) throw PreconditionError("ihdp_like: n must be at least 20");
  if (config.d < 1) throw PreconditionError("ihdp_like: d must be at least 1");
  if (!(config.p_treat > 0.0 && config.p_treat < 1.0))
    throw PreconditionError("ihdp_like: p_treat must lie in (0, 1)");
  if (config.n_continuous < 0 || config.n_continuous > config.d)
    throw PreconditionError("ihdp_like: n_continuous must lie in [0, d]");
  if (config.beta_grid.empty() || config.beta_grid.size() != config.beta_probs.size())
    throw PreconditionError("ihdp_like: beta grid and probabilities must be non-empty and aligned");
  if (!(config.noise_sd >= 0.0)) throw PreconditionError("ihdp_like: noise_sd must be >= 0");

  const Index n = config.n;
  const Index d = config.d;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(seed, 0x1d4bULL, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::discrete_distribution<int> beta_pick(config.beta_probs.begin(), config.beta_probs.end());

    Dataset data;
    data.x.resize(n, d);
    data.kinds.assign(static_cast<std::size_t>(d), FeatureKind::binary);
    for (Index c = 0; c < config.n_continuous; ++c) data.kinds[static_cast<std::size_t>(c)] = FeatureKind::continuous;
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < d; ++c)
        data.x(i, c) = c < config.n_continuous ? normal(rng) : (coin(rng) ? 1.0 : 0.0);

    Vector beta(d);
    for (Index c = 0; c < d; ++c) beta(c) = config.beta_grid[static_cast<std::size_t>(beta_pick(rng))];

    Vector propensity = Vector::Constant(n, config.p_treat);
    if (config.confounded) {
      Vector g(d);
      for (Index c = 0; c < d; ++c) g(c) = normal(rng) / std::sqrt(static_cast<double>(d));
      const double base = std::log(config.p_treat / (1.0 - config.p_treat));
      for (Index i = 0; i < n; ++i) {
        double score = 0.0;
        for (Index c = 0; c < d; ++c) {
          const double centered = c < config.n_continuous ? data.x(i, c) : 2.0 * (data.x(i, c) - 0.5);
          score += g(c) * centered;
        }
        propensity(i) = sigmoid(base + config.confounding_strength * score);
      }
    }
    data.t.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) data.t[static_cast<std::size_t>(i)] = unif(rng) < propensity(i) ? 1 : 0;
    if (!both_arms(data.t)) continue;

    const Vector linear = (data.x.array() + 0.5).matrix() * beta;
    const Vector exp_part = linear.array().exp().matrix();
    double gap = 0.0;
    Index n1 = 0;
    for (Index i = 0; i < n; ++i) {
      if (data.t[static_cast<std::size_t>(i)] == 1) {
        gap += exp_part(i) - linear(i);
        ++n1;
      }
    }
    const double omega = config.target_att + gap / static_cast<double>(n1);
    Vector mu0 = exp_part;
    Vector mu1 = (linear.array() + omega).matrix();

    data.y.resize(n);
    for (Index i = 0; i < n; ++i) {
      const double noise = config.noise_sd * normal(rng);
      data.y(i) = (data.t[static_cast<std::size_t>(i)] == 1 ? mu1(i) : mu0(i)) + noise;
    }
    return Synthetic{std::move(data), GroundTruth::from_surfaces(std::move(mu0), std::move(mu1)),
                     std::move(propensity)};
  }
  throw StructuralError("ihdp_like: degenerate treatment arm after 10 attempts");
}

// ---------------------------------------------------------------------------
// ACIC-like

double TermSpec::operator()(double value) const {
  auto coeff = [&](std::size_t k) { return k < coeffs.size() ? coeffs[k] : 0.0; };
  switch (kind) {
    case TermKind::zero: return 0.0;
    case TermKind::polynomial:
      return coeff(0) * value + coeff(1) * value * value + coeff(2) * value * value * value;
    case TermKind::step: return value > lo ? coeff(0) : 0.0;
    case TermKind::indicator: return (value >= lo && value <= hi) ? coeff(0) : 0.0;
  }
  return 0.0;
}

double SurfaceSpec::operator()(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const double a = x(feature_a);
  const double b = x(feature_b);
  const double inner = offset + f1(a) + f2(b) + f3(a) * f4(b);
  switch (link) {
    case Link::identity: return inner;
    case Link::sigmoid: return sigmoid(inner);
    case Link::clip: return std::clamp(inner, clip_lo, clip_hi);
  }
  return inner;
}

void AcicProtocol::validate() const {
  if (n_continuous < 0 || n_count < 0 || n_binary < 0 || dim() < 1)
    throw PreconditionError("acic_like: feature counts must be non-negative with d >= 1");
  if (!(noise_sd > 0.0)) throw PreconditionError("acic_like: noise scale must be positive");
  for (const SurfaceSpec* s : {&propensity, &outcome0, &outcome1}) {
    if (s->feature_a < 0 || s->feature_a >= dim() || s->feature_b < 0 || s->feature_b >= dim())
      throw PreconditionError("acic_like: surface feature index out of range");
    for (const TermSpec* term : {&s->f1, &s->f2, &s->f3, &s->f4})
      if (term->kind == TermKind::polynomial && term->coeffs.size() > 3)
        throw PreconditionError("acic_like: polynomial terms are limited to degree 3");
    if (s->link == Link::clip && !(s->clip_lo < s->clip_hi))
      throw PreconditionError("acic_like: clip link needs clip_lo < clip_hi");
  }
}

namespace {

TermSpec random_term(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 2);
  TermSpec term;
  switch (pick(rng)) {
    case 0:
      term.kind = TermKind::polynomial;
      term.coeffs = {normal(rng), 0.5 * normal(rng), 0.15 * normal(rng)};
      break;
    case 1:
      term.kind = TermKind::step;
      term.coeffs = {2.0 * normal(rng)};
      term.lo = 0.5 * normal(rng);
      break;
    default: {
      term.kind = TermKind::indicator;
      term.coeffs = {2.0 * normal(rng)};
      const double a = normal(rng), b = normal(rng);
      term.lo = std::min(a, b);
      term.hi = std::max(a, b);
      break;
    }
  }
  return term;
}

SurfaceSpec random_surface(Rng& rng, Index n_features, Link link) {
  std::uniform_int_distribution<Index> feature(0, n_features - 1);
  SurfaceSpec s;
  s.feature_a = feature(rng);
  s.feature_b = feature(rng);
  s.f1 = random_term(rng);
  s.f2 = random_term(rng);
  s.f3 = random_term(rng);
  s.f4 = random_term(rng);
  s.link = link;
  return s;
}

}  // namespace

AcicProtocol random_acic_protocol(std::uint64_t seed, Index n_continuous, Index n_count,
                                  Index n_binary) {
  if (n_continuous < 1) throw PreconditionError("acic_like: random protocols need a continuous feature");
  Rng rng(derive_seed(seed, 0xac1cULL));
  std::uniform_real_distribution<double> rate(0.2, 0.5);
  std::bernoulli_distribution coin(0.5);
  AcicProtocol p;
  p.n_continuous = n_continuous;
  p.n_count = n_count;
  p.n_binary = n_binary;
  p.propensity = random_surface(rng, n_continuous, Link::sigmoid);
  const double r = rate(rng);
  p.propensity.offset = std::log(r / (1.0 - r));
  // keep the assignment signal moderate so overlap is not extreme
  for (TermSpec* term : {&p.propensity.f1, &p.propensity.f2, &p.propensity.f3, &p.propensity.f4})
    for (double& c : term->coeffs) c *= 0.5;
  p.outcome0 = random_surface(rng, n_continuous, Link::identity);
  p.outcome1 = random_surface(rng, n_continuous, coin(rng) ? Link::identity : Link::clip);
  if (p.outcome1.link == Link::clip) {
    p.outcome1.clip_lo = -3.0;
    p.outcome1.clip_hi = 3.0;
  }
  p.noise_sd = 0.5;
  return p;
}

Synthetic generate_acic_like(std::uint64_t seed, Index n, const AcicProtocol& protocol) {
  protocol.validate();
  if (n < 2) throw PreconditionError("acic_like: n must be at least 2");
  const Index d = protocol.dim();
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(seed, 0xac1dULL, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::poisson_distribution<int> poisson(protocol.count_rate);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Dataset data;
    data.x.resize(n, d);
    data.kinds.clear();
    for (Index c = 0; c < protocol.n_continuous; ++c) data.kinds.push_back(FeatureKind::continuous);
    for (Index c = 0; c < protocol.n_count; ++c) data.kinds.push_back(FeatureKind::count);
    for (Index c = 0; c < protocol.n_binary; ++c) data.kinds.push_back(FeatureKind::binary);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < d; ++c) {
        switch (data.kinds[static_cast<std::size_t>(c)]) {
          case FeatureKind::continuous: data.x(i, c) = normal(rng); break;
          case FeatureKind::count: data.x(i, c) = poisson(rng); break;
          case FeatureKind::binary: data.x(i, c) = coin(rng) ? 1.0 : 0.0; break;
        }
      }
    }
    Vector propensity(n), mu0(n), mu1(n);
    data.t.resize(static_cast<std::size_t>(n));
    data.y.resize(n);
    for (Index i = 0; i < n; ++i) {
      const auto row = data.x.row(i);
      propensity(i) = std::clamp(protocol.propensity(row), 0.05, 0.95);
      mu0(i) = protocol.outcome0(row);
      mu1(i) = protocol.outcome1(row);
    }
    for (Index i = 0; i < n; ++i) {
      data.t[static_cast<std::size_t>(i)] = unif(rng) < propensity(i) ? 1 : 0;
      const double noise = protocol.noise_sd * normal(rng);
      data.y(i) = (data.t[static_cast<std::size_t>(i)] == 1 ? mu1(i) : mu0(i)) + noise;
    }
    if (!both_arms(data.t)) continue;
    return Synthetic{std::move(data), GroundTruth::from_surfaces(std::move(mu0), std::move(mu1)),
                     std::move(propensity)};
  }
  throw StructuralError("acic_like: degenerate treatment arm after 10 attempts");
}

// ---------------------------------------------------------------------------
// Two-cluster positivity toy

Synthetic generate_two_cluster_toy(std::uint64_t seed, Index n, const ToyConfig& config) {
  if (n < 40) throw PreconditionError("toy: n must be at least 40");
  Rng rng(derive_seed(seed, 0x70bULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset data;
  data.x.resize(n, 2);
  data.t.resize(static_cast<std::size_t>(n));
  data.y.resize(n);
  data.kinds = {FeatureKind::continuous, FeatureKind::continuous};
  Vector propensity(n), mu0(n), mu1(n);
  const Index half = n / 2;
  for (Index i = 0; i < n; ++i) {
    const bool upper = i >= half;
    const double x1 = config.horizontal_sd * normal(rng);
    const double x2 = (upper ? config.cluster_offset : -config.cluster_offset) + config.vertical_sd * normal(rng);
    data.x(i, 0) = x1;
    data.x(i, 1) = x2;
    propensity(i) = sigmoid((upper ? -config.slope : config.slope) * x1);
    mu0(i) = x1;
    mu1(i) = x1 + 1.0;
  }
  for (Index i = 0; i < n; ++i) {
    data.t[static_cast<std::size_t>(i)] = unif(rng) < propensity(i) ? 1 : 0;
    data.y(i) = (data.t[static_cast<std::size_t>(i)] == 1 ? mu1(i) : mu0(i)) + 0.1 * normal(rng);
  }
  return Synthetic{std::move(data), GroundTruth::from_surfaces(std::move(mu0), std::move(mu1)),
                   std::move(propensity)};
}

// ---------------------------------------------------------------------------
// CSV

std::string to_csv(const Dataset& data, const GroundTruth* truth) {
  data.validate();
  if (truth && truth->size() != data.size()) throw ShapeError("csv: ground truth length differs");
  std::string out;
  for (Index c = 0; c < data.dim(); ++c) out += "x" + std::to_string(c) + ",";
  out += "t,y";
  if (truth) out += ",mu0,mu1";
  out += "\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index c = 0; c < data.dim(); ++c) out += format_double(data.x(i, c)) + ",";
    out += std::to_string(data.t[static_cast<std::size_t>(i)]) + "," + format_double(data.y(i));
    if (truth) out += "," + format_double(truth->mu0(i)) + "," + format_double(truth->mu1(i));
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "not a number: '" + text + "'");
  }
  if (used != text.size()) throw ParseError(line, "trailing characters in '" + text + "'");
  if (!std::isfinite(value)) throw ParseError(line, "non-finite value '" + text + "'");
  return value;
}

FeatureKind infer_kind(const Eigen::Ref<const Vector>& column) {
  bool binary = true, integral = true;
  for (Index i = 0; i < column.size(); ++i) {
    const double v = column(i);
    if (v != 0.0 && v != 1.0) binary = false;
    if (v < 0.0 || v != std::floor(v)) integral = false;
  }
  if (binary) return FeatureKind::binary;
  return integral ? FeatureKind::count : FeatureKind::continuous;
}

}  // namespace

CsvContents parse_csv(const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  if (!std::getline(stream, line)) throw SchemaError("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);

  Index d = 0;
  while (static_cast<std::size_t>(d) < header.size() && header[static_cast<std::size_t>(d)] == "x" + std::to_string(d)) ++d;
  const auto find = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto t_col = find("t");
  const auto y_col = find("y");
  if (t_col < 0) throw SchemaError("csv: missing column 't'");
  if (y_col < 0) throw SchemaError("csv: missing column 'y'");
  const auto mu0_col = find("mu0");
  const auto mu1_col = find("mu1");
  if ((mu0_col < 0) != (mu1_col < 0)) throw SchemaError("csv: mu0 and mu1 must appear together");
  const bool has_truth = mu0_col >= 0;
  const std::size_t expected = static_cast<std::size_t>(d) + 2 + (has_truth ? 2 : 0);
  if (header.size() != expected) throw SchemaError("csv: unexpected columns in header");

  std::vector<std::vector<double>> rows;
  std::vector<int> flags;
  std::size_t line_no = 1;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(fields.size()));
    std::vector<double> values(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (static_cast<std::ptrdiff_t>(k) == t_col) {
        if (fields[k] != "0" && fields[k] != "1") throw ParseError(line_no, "t must be 0 or 1");
        values[k] = fields[k] == "1" ? 1.0 : 0.0;
      } else {
        values[k] = parse_number(fields[k], line_no);
      }
    }
    rows.push_back(std::move(values));
  }

  const Index n = static_cast<Index>(rows.size());
  CsvContents out;
  out.data.x.resize(n, d);
  out.data.y.resize(n);
  out.data.t.resize(static_cast<std::size_t>(n));
  Vector mu0(has_truth ? n : 0), mu1(has_truth ? n : 0);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Index c = 0; c < d; ++c) out.data.x(i, c) = r[static_cast<std::size_t>(c)];
    out.data.t[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(t_col)] == 1.0 ? 1 : 0;
    out.data.y(i) = r[static_cast<std::size_t>(y_col)];
    if (has_truth) {
      mu0(i) = r[static_cast<std::size_t>(mu0_col)];
      mu1(i) = r[static_cast<std::size_t>(mu1_col)];
    }
  }
  for (Index c = 0; c < d; ++c) out.data.kinds.push_back(infer_kind(out.data.x.col(c)));
  if (has_truth) out.truth = GroundTruth::from_surfaces(std::move(mu0), std::move(mu1));
  return out;
}

void save_csv(const std::filesystem::path& path, const Dataset& data, const GroundTruth* truth) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("cannot open '" + path.string() + "' for writing");
  file << to_csv(data, truth);
  if (!file) throw Error("failed writing '" + path.string() + "'");
}

CsvContents load_csv(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_csv(buffer.str());
}

// ---------------------------------------------------------------------------
// Split

SplitIndices split(const Dataset& data, double test_fraction, double val_fraction,
                   std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw PreconditionError("split: test_fraction must lie in (0, 1)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw PreconditionError("split: val_fraction must lie in (0, 1)");
  data.validate();
  const Index n = data.size();
  const Index n_test = std::llround(static_cast<double>(n) * test_fraction);
  const Index n_val = std::llround(static_cast<double>(n - n_test) * val_fraction);
  const Index n_train = n - n_test - n_val;
  if (n_test < 2 || n_val < 2 || n_train < 2)
    throw PreconditionError("split: too few samples for the requested fractions");

  const auto arms_ok = [&](const IndexList& part) {
    bool has0 = false, has1 = false;
    for (Index i : part) (data.t[static_cast<std::size_t>(i)] == 1 ? has1 : has0) = true;
    return has0 && has1;
  };
  Rng rng(derive_seed(seed, 0x5b117ULL));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    IndexList order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    SplitIndices s;
    s.test.assign(order.begin(), order.begin() + n_test);
    s.validation.assign(order.begin() + n_test, order.begin() + n_test + n_val);
    s.train.assign(order.begin() + n_test + n_val, order.end());
    for (auto* part : {&s.train, &s.validation, &s.test}) std::sort(part->begin(), part->end());
    if (arms_ok(s.train) && arms_ok(s.validation) && arms_ok(s.test)) return s;
  }
  throw StructuralError("split: could not keep both arms in every part after 10 attempts");
}

nlohmann::json to_json(const SplitIndices& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

SplitIndices split_from_json(const nlohmann::json& doc) {
  return SplitIndices{doc.at("train").get<IndexList>(), doc.at("validation").get<IndexList>(),
                      doc.at("test").get<IndexList>()};
}

// ---------------------------------------------------------------------------
// Scaler

bool Scaler::any_clamped() const {
  return y_clamped || std::find(clamped.begin(), clamped.end(), true) != clamped.end();
}

Matrix Scaler::transform_x(const Matrix& x) const {
  if (x_shift.size() == 0) return x;
  if (x.cols() != x_shift.size()) throw ShapeError("scaler: column count mismatch");
  Matrix out = x;
  out.rowwise() -= x_shift.transpose();
  out.array().rowwise() /= x_scale.transpose().array();
  return out;
}

Vector Scaler::transform_y(const Vector& y) const {
  return ((y.array() - y_shift) / y_scale).matrix();
}

Vector Scaler::inverse_y(const Vector& y) const {
  return (y.array() * y_scale + y_shift).matrix();
}

Dataset Scaler::transform(const Dataset& data) const {
  Dataset out = data;
  out.x = transform_x(data.x);
  out.y = transform_y(data.y);
  return out;
}

Scaler fit_scaler(const Dataset& data, std::span<const Index> fit_indices) {
  if (fit_indices.empty()) throw PreconditionError("standardize: empty fit index set");
  data.validate();
  const double m = static_cast<double>(fit_indices.size());
  Scaler s;
  s.x_shift = Vector::Zero(data.dim());
  s.x_scale = Vector::Ones(data.dim());
  s.clamped.assign(static_cast<std::size_t>(data.dim()), false);
  auto moments = [&](auto value) {
    double mean = 0.0;
    for (Index i : fit_indices) mean += value(i);
    mean /= m;
    double var = 0.0;
    for (Index i : fit_indices) var += (value(i) - mean) * (value(i) - mean);
    return std::pair{mean, std::sqrt(var / m)};
  };
  for (Index c = 0; c < data.dim(); ++c) {
    if (data.kinds[static_cast<std::size_t>(c)] == FeatureKind::binary) continue;
    const auto [mean, sd] = moments([&](Index i) { return data.x(i, c); });
    if (sd > 0.0) {
      s.x_shift(c) = mean;
      s.x_scale(c) = sd;
    } else {
      s.clamped[static_cast<std::size_t>(c)] = true;
    }
  }
  const auto [y_mean, y_sd] = moments([&](Index i) { return data.y(i); });
  if (y_sd > 0.0) {
    s.y_shift = y_mean;
    s.y_scale = y_sd;
  } else {
    s.y_clamped = true;
  }
  return s;
}

std::pair<Scaler, Dataset> standardize(const Dataset& data, std::span<const Index> fit_indices) {
  Scaler s = fit_scaler(data, fit_indices);
  Dataset transformed = s.transform(data);
  return {std::move(s), std::move(transformed)};
}

nlohmann::json to_json(const Scaler& s) {
  nlohmann::json doc;
  doc["x_shift"] = std::vector<double>(s.x_shift.data(), s.x_shift.data() + s.x_shift.size());
  doc["x_scale"] = std::vector<double>(s.x_scale.data(), s.x_scale.data() + s.x_scale.size());
  doc["y_shift"] = s.y_shift;
  doc["y_scale"] = s.y_scale;
  doc["clamped"] = s.clamped;
  doc["y_clamped"] = s.y_clamped;
  return doc;
}

Scaler scaler_from_json(const nlohmann::json& doc) {
  Scaler s;
  const auto shift = doc.at("x_shift").get<std::vector<double>>();
  const auto scale = doc.at("x_scale").get<std::vector<double>>();
  if (shift.size() != scale.size()) throw ShapeError("scaler JSON: shift/scale lengths differ");
  s.x_shift = Eigen::Map<const Vector>(shift.data(), static_cast<Index>(shift.size()));
  s.x_scale = Eigen::Map<const Vector>(scale.data(), static_cast<Index>(scale.size()));
  s.y_shift = doc.at("y_shift").get<double>();
  s.y_scale = doc.at("y_scale").get<double>();
  s.clamped = doc.value("clamped", std::vector<bool>(shift.size(), false));
  s.y_clamped = doc.value("y_clamped", false);
  return s;
}

}  // namespace alrite
