#include "alrite/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alrite {

std::string to_string(Role role) {
  return role == Role::control_driven ? "control_driven" : "treatment_driven";
}

Role parse_role(const std::string& name) {
  if (name == "control_driven") return Role::control_driven;
  if (name == "treatment_driven") return Role::treatment_driven;
  throw ConfigError("role", "unknown role '" + name + "'");
}

void PipelineHyperparams::validate() const {
  auto check = [](bool ok, const char* field, const char* message) {
    if (!ok) throw ConfigError(field, message);
  };
  check(alpha >= 0.0 && std::isfinite(alpha), "alpha", "must be finite and >= 0");
  check(beta >= 0.0 && std::isfinite(beta), "beta", "must be finite and >= 0");
  check(gamma >= 0.0 && std::isfinite(gamma), "gamma", "must be finite and >= 0");
  check(embed_layers >= 1 && embed_layers <= 5, "embed_layers", "must lie in [1, 5]");
  check(head_layers >= 1 && head_layers <= 5, "head_layers", "must lie in [1, 5]");
  check(embed_width >= 1, "embed_width", "must be positive");
  check(head_width >= 1, "head_width", "must be positive");
  check(batch_size >= 1, "batch_size", "must be positive");
  check(epochs >= 0, "epochs", "must be >= 0");
  check(base_lr > 0.0 && std::isfinite(base_lr), "base_lr", "must be positive");
  check(decay_rate > 0.0 && decay_rate <= 1.0, "decay_rate", "must lie in (0, 1]");
  check(decay_period >= 1, "decay_period", "must be positive");
}

nlohmann::json to_json(const PipelineHyperparams& hp) {
  return {{"alpha", hp.alpha},
          {"beta", hp.beta},
          {"gamma", hp.gamma},
          {"embed_layers", hp.embed_layers},
          {"embed_width", hp.embed_width},
          {"head_layers", hp.head_layers},
          {"head_width", hp.head_width},
          {"batch_size", hp.batch_size},
          {"epochs", hp.epochs},
          {"base_lr", hp.base_lr},
          {"decay_rate", hp.decay_rate},
          {"decay_period", hp.decay_period},
          {"normalize_embedding", hp.normalize_embedding},
          {"normalize_heads", hp.normalize_heads}};
}

PipelineHyperparams hyperparams_from_json(const nlohmann::json& doc) {
  PipelineHyperparams hp;
  if (!doc.is_object()) throw ConfigError("hyperparams", "must be an object");
  const auto read = [&](const char* key, auto& target) {
    if (!doc.contains(key)) return;
    try {
      doc.at(key).get_to(target);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, "has the wrong type");
    }
  };
  read("alpha", hp.alpha);
  read("beta", hp.beta);
  read("gamma", hp.gamma);
  read("embed_layers", hp.embed_layers);
  read("embed_width", hp.embed_width);
  read("head_layers", hp.head_layers);
  read("head_width", hp.head_width);
  read("batch_size", hp.batch_size);
  read("epochs", hp.epochs);
  read("base_lr", hp.base_lr);
  read("decay_rate", hp.decay_rate);
  read("decay_period", hp.decay_period);
  read("normalize_embedding", hp.normalize_embedding);
  read("normalize_heads", hp.normalize_heads);
  hp.validate();
  return hp;
}

void Pipeline::validate() const {
  phi.validate();
  h0.validate();
  h1.validate();
  if (h0.input_dim() != phi.output_dim() || h1.input_dim() != phi.output_dim())
    throw ShapeError("pipeline: head input width differs from embedding width");
  if (h0.output_dim() != 1 || h1.output_dim() != 1)
    throw ShapeError("pipeline: heads must have a single output");
  if (scaler.x_shift.size() != 0 && scaler.x_shift.size() != phi.input_dim())
    throw ShapeError("pipeline: scaler width differs from embedding input");
}

Pipeline make_pipeline(Index input_dim, Role role, const PipelineHyperparams& hp, Rng& rng) {
  hp.validate();
  if (input_dim < 1) throw PreconditionError("pipeline: input dimension must be positive");
  std::vector<Index> phi_dims{input_dim};
  for (int k = 0; k < hp.embed_layers; ++k) phi_dims.push_back(hp.embed_width);
  std::vector<Index> head_dims{hp.embed_width};
  for (int k = 0; k < hp.head_layers; ++k) head_dims.push_back(hp.head_width);
  head_dims.push_back(1);
  Pipeline p;
  p.role = role;
  p.phi = nn::make_mlp(phi_dims, nn::Activation::elu, hp.normalize_embedding, rng);
  p.h0 = nn::make_mlp(head_dims, nn::Activation::elu, hp.normalize_heads, rng);
  p.h1 = nn::make_mlp(head_dims, nn::Activation::elu, hp.normalize_heads, rng);
  return p;
}

namespace {

struct ArmCounts {
  Index driving = 0;
  Index other = 0;
};

ArmCounts arm_counts(const Dataset& data, int a) {
  const Index n1 = data.n_treated();
  const Index n0 = data.size() - n1;
  if (n0 == 0 || n1 == 0) throw StructuralError("compound loss: a treatment arm is empty");
  return a == 0 ? ArmCounts{n0, n1} : ArmCounts{n1, n0};
}

void check_twins(const Dataset& data, const TwinMap& twins) {
  if (static_cast<Index>(twins.twin_index.size()) != data.size() ||
      static_cast<Index>(twins.weight.size()) != data.size())
    throw ShapeError("compound loss: twin map does not cover the dataset");
}

double regularization(const Pipeline& p, double gamma) {
  const nn::Mlp* nets[] = {&p.phi, &p.h0, &p.h1};
  return gamma * nn::param_norm_sq(nets);
}

void finish(LossBreakdown& loss) {
  loss.total = loss.factual_driving + loss.factual_weighted + loss.twin + loss.regularization;
  const std::pair<const char*, double> terms[] = {{"driving-arm factual", loss.factual_driving},
                                                  {"weighted factual", loss.factual_weighted},
                                                  {"twin distance", loss.twin},
                                                  {"regularization", loss.regularization}};
  for (const auto& [name, value] : terms)
    if (!std::isfinite(value))
      throw NumericError(std::string("compound loss: non-finite ") + name + " term");
}

// Loss from a precomputed latent matrix of all rows of `data`.
LossBreakdown loss_from_latent(const Pipeline& p, const Matrix& z, const Dataset& data,
                               const TwinMap& twins, const PipelineHyperparams& hp) {
  const int a = driving_arm(p.role);
  const ArmCounts counts = arm_counts(data, a);
  const double denom = static_cast<double>(counts.other) + hp.beta * static_cast<double>(counts.driving);
  const Vector pred0 = nn::forward_batch(p.h0, z).col(0);
  const Vector pred1 = nn::forward_batch(p.h1, z).col(0);
  LossBreakdown loss;
  for (Index i = 0; i < data.size(); ++i) {
    const int ti = data.t[static_cast<std::size_t>(i)];
    const double r = data.y(i) - (ti == 1 ? pred1(i) : pred0(i));
    if (ti == a) {
      loss.factual_driving += r * r;
      if (hp.alpha > 0.0)
        loss.twin += (z.row(i) - z.row(twins.twin_index[static_cast<std::size_t>(i)])).squaredNorm();
    } else {
      loss.factual_weighted +=
          (1.0 + hp.beta * static_cast<double>(twins.weight[static_cast<std::size_t>(i)])) * r * r;
    }
  }
  loss.factual_driving /= static_cast<double>(counts.driving);
  loss.factual_weighted /= denom;
  loss.twin *= hp.alpha / static_cast<double>(counts.driving);
  loss.regularization = regularization(p, hp.gamma);
  finish(loss);
  return loss;
}

}  // namespace

LossBreakdown compound_loss(const Pipeline& p, const Dataset& data, const TwinMap& twins,
                            const PipelineHyperparams& hp) {
  data.validate();
  check_twins(data, twins);
  return loss_from_latent(p, nn::forward_batch(p.phi, data.x), data, twins, hp);
}

LossAndGradients compound_loss_gradients(const Pipeline& p, const Dataset& data,
                                         const TwinMap& twins, const PipelineHyperparams& hp,
                                         std::span<const Index> members, double n_scale) {
  check_twins(data, twins);
  if (members.empty()) throw PreconditionError("compound loss: empty minibatch");
  const int a = driving_arm(p.role);
  const ArmCounts counts = arm_counts(data, a);
  const double n_a = static_cast<double>(counts.driving);
  const double denom = static_cast<double>(counts.other) + hp.beta * n_a;

  // Rows fed through phi: the members, then the twins of driving-arm members.
  const Index m = static_cast<Index>(members.size());
  IndexList rows(members.begin(), members.end());
  std::vector<std::pair<Index, Index>> pairs;  // (member position, twin position)
  if (hp.alpha > 0.0) {
    for (Index k = 0; k < m; ++k) {
      const Index i = members[static_cast<std::size_t>(k)];
      if (data.t[static_cast<std::size_t>(i)] != a) continue;
      pairs.emplace_back(k, static_cast<Index>(rows.size()));
      rows.push_back(twins.twin_index[static_cast<std::size_t>(i)]);
    }
  }
  Matrix x(static_cast<Index>(rows.size()), data.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Index>(r)) = data.x.row(rows[r]);

  const nn::ForwardCache phi_cache = nn::forward_cached(p.phi, x);
  const Matrix& z = phi_cache.output;
  Matrix dz = Matrix::Zero(z.rows(), z.cols());

  LossAndGradients out;
  out.grads.phi = nn::zeros_like(p.phi);
  out.grads.h0 = nn::zeros_like(p.h0);
  out.grads.h1 = nn::zeros_like(p.h1);

  for (int arm : {0, 1}) {
    IndexList pos;
    for (Index k = 0; k < m; ++k)
      if (data.t[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] == arm) pos.push_back(k);
    if (pos.empty()) continue;
    Matrix za(static_cast<Index>(pos.size()), z.cols());
    for (std::size_t r = 0; r < pos.size(); ++r) za.row(static_cast<Index>(r)) = z.row(pos[r]);
    const nn::Mlp& head = p.head(arm);
    const nn::ForwardCache head_cache = nn::forward_cached(head, za);
    Matrix upstream(static_cast<Index>(pos.size()), 1);
    double sum = 0.0;
    for (std::size_t r = 0; r < pos.size(); ++r) {
      const Index i = members[static_cast<std::size_t>(pos[r])];
      const double resid = head_cache.output(static_cast<Index>(r), 0) - data.y(i);
      double coeff;
      if (arm == a) {
        coeff = n_scale / n_a;
      } else {
        coeff = n_scale * (1.0 + hp.beta * static_cast<double>(twins.weight[static_cast<std::size_t>(i)])) / denom;
      }
      sum += coeff * resid * resid;
      upstream(static_cast<Index>(r), 0) = 2.0 * coeff * resid;
    }
    (arm == a ? out.loss.factual_driving : out.loss.factual_weighted) = sum;
    nn::BackwardResult back = nn::backward(head, head_cache, upstream);
    (arm == 1 ? out.grads.h1 : out.grads.h0) = std::move(back.params);
    for (std::size_t r = 0; r < pos.size(); ++r) dz.row(pos[r]) += back.input.row(static_cast<Index>(r));
  }

  const double twin_coeff = hp.alpha * n_scale / n_a;
  for (const auto& [k, j] : pairs) {
    const Eigen::RowVectorXd diff = z.row(k) - z.row(j);
    out.loss.twin += twin_coeff * diff.squaredNorm();
    dz.row(k) += 2.0 * twin_coeff * diff;
    dz.row(j) -= 2.0 * twin_coeff * diff;
  }

  out.loss.regularization = regularization(p, hp.gamma);
  finish(out.loss);

  nn::BackwardResult phi_back = nn::backward(p.phi, phi_cache, dz);
  out.grads.phi = std::move(phi_back.params);
  if (hp.gamma > 0.0) {
    nn::add_l2_gradient(p.phi, hp.gamma, out.grads.phi);
    nn::add_l2_gradient(p.h0, hp.gamma, out.grads.h0);
    nn::add_l2_gradient(p.h1, hp.gamma, out.grads.h1);
  }
  return out;
}

namespace {

double validation_mse(const Pipeline& p, const Dataset& model_val, const Vector& raw_y) {
  const Matrix z = nn::forward_batch(p.phi, model_val.x);
  const Vector pred0 = nn::forward_batch(p.h0, z).col(0);
  const Vector pred1 = nn::forward_batch(p.h1, z).col(0);
  double sum = 0.0;
  for (Index i = 0; i < model_val.size(); ++i) {
    const double model = model_val.t[static_cast<std::size_t>(i)] == 1 ? pred1(i) : pred0(i);
    const double r = raw_y(i) - (model * p.scaler.y_scale + p.scaler.y_shift);
    sum += r * r;
  }
  return sum / static_cast<double>(model_val.size());
}

// Under the driving embedding, the other arm collects exactly one vote per
// driving-arm sample, so its weighted total equals n_other + beta * n_driving.
void check_vote_total(const Dataset& data, const TwinMap& twins, int a) {
  Index votes = 0, n_a = 0;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.t[static_cast<std::size_t>(i)] == a) ++n_a;
    else votes += twins.weight[static_cast<std::size_t>(i)];
  }
  if (votes != n_a) throw Error("training: twin votes do not match the driving arm size");
}

}  // namespace

std::pair<Pipeline, TrainReport> train_pipeline(const Dataset& data, const SplitIndices& split,
                                                Role role, const PipelineHyperparams& hp,
                                                std::uint64_t seed) {
  hp.validate();
  data.validate();
  auto [scaler, model_data] = standardize(data, split.train);
  const Dataset train = model_data.subset(split.train);
  const Dataset val = model_data.subset(split.validation);
  train.require_both_arms();
  val.require_both_arms();
  Vector raw_val_y(val.size());
  for (std::size_t k = 0; k < split.validation.size(); ++k)
    raw_val_y(static_cast<Index>(k)) = data.y(split.validation[k]);

  Rng init_rng(derive_seed(seed, 0x1417ULL));
  Pipeline p = make_pipeline(data.dim(), role, hp, init_rng);
  p.scaler = std::move(scaler);
  const int a = driving_arm(role);

  nn::AdamConfig adam{hp.base_lr, 0.9, 0.999, 1e-8, hp.decay_rate, hp.decay_period};
  nn::AdamState adam_phi = nn::make_adam_state(p.phi, adam);
  nn::AdamState adam_h0 = nn::make_adam_state(p.h0, adam);
  nn::AdamState adam_h1 = nn::make_adam_state(p.h1, adam);

  Rng shuffle_rng(derive_seed(seed, 0x5b0ffULL));
  const Index n = train.size();
  const Index batch = std::min(hp.batch_size, n);
  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  TrainReport report;
  Pipeline best = p;
  TwinMap twins;
  const auto record_epoch = [&](int epoch) {
    const Matrix z = nn::forward_batch(p.phi, train.x);
    twins = mirror_twins(z, train.t);
    check_vote_total(train, twins, a);
    EpochRecord rec;
    try {
      rec.train_loss = loss_from_latent(p, z, train, twins, hp);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
    rec.validation_mse = validation_mse(p, val, raw_val_y);
    if (!std::isfinite(rec.validation_mse))
      throw NumericError("training: non-finite validation error at epoch " + std::to_string(epoch));
    report.epochs.push_back(rec);
    if (epoch == 0 || rec.validation_mse < report.retained_validation_mse) {
      report.retained_epoch = epoch;
      report.retained_validation_mse = rec.validation_mse;
      best = p;
    }
  };

  record_epoch(0);
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (Index start = 0; start < n; start += batch) {
      const Index stop = std::min(n, start + batch);
      const std::span<const Index> members(order.data() + start, static_cast<std::size_t>(stop - start));
      LossAndGradients lg;
      try {
        lg = compound_loss_gradients(p, train, twins, hp, members,
                                     static_cast<double>(n) / static_cast<double>(members.size()));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      nn::adam_step(p.phi, lg.grads.phi, adam_phi);
      nn::adam_step(p.h0, lg.grads.h0, adam_h0);
      nn::adam_step(p.h1, lg.grads.h1, adam_h1);
    }
    record_epoch(epoch);
  }
  return {std::move(best), std::move(report)};
}

Matrix embed(const Pipeline& p, const Matrix& x) {
  if (x.cols() != p.phi.input_dim()) throw ShapeError("pipeline: covariate width mismatch");
  return nn::forward_batch(p.phi, p.scaler.transform_x(x));
}

Vector predict_mu(const Pipeline& p, const Matrix& x, int arm) {
  const Vector model = nn::forward_batch(p.head(arm), embed(p, x)).col(0);
  return p.scaler.inverse_y(model);
}

Vector predict_tau(const Pipeline& p, const Matrix& x) {
  const Matrix z = embed(p, x);
  const Vector diff = nn::forward_batch(p.h1, z).col(0) - nn::forward_batch(p.h0, z).col(0);
  return diff * p.scaler.y_scale;
}

Vector predict_factual(const Pipeline& p, const Matrix& x, std::span<const int> t) {
  if (static_cast<Index>(t.size()) != x.rows()) throw ShapeError("pipeline: treatment length mismatch");
  const Matrix z = embed(p, x);
  const Vector pred0 = nn::forward_batch(p.h0, z).col(0);
  const Vector pred1 = nn::forward_batch(p.h1, z).col(0);
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = t[static_cast<std::size_t>(i)] == 1 ? pred1(i) : pred0(i);
  return p.scaler.inverse_y(out);
}

double factual_mse(const Pipeline& p, const Dataset& data, std::span<const Index> indices) {
  if (indices.empty()) throw PreconditionError("factual_mse: empty index set");
  const Dataset part = data.subset(indices);
  const Vector pred = predict_factual(p, part.x, part.t);
  return (part.y - pred).squaredNorm() / static_cast<double>(part.size());
}

nlohmann::json to_json(const Pipeline& p) {
  return {{"role", to_string(p.role)},
          {"phi", nn::to_json(p.phi)},
          {"h0", nn::to_json(p.h0)},
          {"h1", nn::to_json(p.h1)},
          {"scaler", to_json(p.scaler)}};
}

Pipeline pipeline_from_json(const nlohmann::json& doc) {
  Pipeline p;
  p.role = parse_role(doc.at("role").get<std::string>());
  p.phi = nn::mlp_from_json(doc.at("phi"));
  p.h0 = nn::mlp_from_json(doc.at("h0"));
  p.h1 = nn::mlp_from_json(doc.at("h1"));
  p.scaler = scaler_from_json(doc.at("scaler"));
  p.validate();
  return p;
}

}  // namespace alrite
