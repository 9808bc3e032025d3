#include "alrite/nn.hpp"

#include <cmath>

namespace alrite::nn {

std::string to_string(Activation activation) {
  return activation == Activation::elu ? "elu" : "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("activation", "unknown activation '" + name + "'");
}

double elu(double u) { return u >= 0.0 ? u : std::expm1(u); }

namespace {

double elu_derivative(double u) { return u >= 0.0 ? 1.0 : std::exp(u); }

void apply_activation(Activation activation, Matrix& values) {
  if (activation == Activation::elu) values = values.unaryExpr([](double u) { return elu(u); });
}

Matrix affine(const Layer& layer, const Matrix& input) {
  Matrix out = input * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

void check_input(const Mlp& mlp, Index cols) {
  if (mlp.layers.empty()) throw ShapeError("network has no layers");
  if (cols != mlp.input_dim()) {
    throw ShapeError("input has " + std::to_string(cols) + " columns, network expects " +
                     std::to_string(mlp.input_dim()));
  }
}

}  // namespace

Index Mlp::input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }

Index Mlp::output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

std::vector<Index> Mlp::layer_dims() const {
  std::vector<Index> dims;
  if (layers.empty()) return dims;
  dims.push_back(input_dim());
  for (const auto& layer : layers) dims.push_back(layer.weight.rows());
  return dims;
}

void Mlp::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows())
      throw ShapeError("layer " + std::to_string(l) + ": bias length does not match weight rows");
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
      throw ShapeError("layer " + std::to_string(l) + ": weight columns do not chain");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw NumericError("layer " + std::to_string(l) + ": non-finite parameter");
  }
}

Mlp make_mlp(std::span<const Index> layer_dims, Activation activation, bool normalize_output,
             Rng& rng) {
  if (layer_dims.size() < 2) throw PreconditionError("an MLP needs at least input and output dims");
  Mlp mlp;
  mlp.activation = activation;
  mlp.normalize_output = normalize_output;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const Index fan_in = layer_dims[l];
    const Index fan_out = layer_dims[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw PreconditionError("layer dims must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c) layer.weight(r, c) = dist(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

ForwardCache forward_cached(const Mlp& mlp, const Matrix& x) {
  check_input(mlp, x.cols());
  ForwardCache cache;
  cache.inputs.reserve(mlp.layers.size());
  cache.pre.reserve(mlp.layers.size());
  Matrix current = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    cache.inputs.push_back(current);
    Matrix pre = affine(mlp.layers[l], current);
    cache.pre.push_back(pre);
    if (l + 1 < mlp.layers.size()) apply_activation(mlp.activation, pre);
    current = std::move(pre);
  }
  if (mlp.normalize_output) {
    cache.output_norms = current.rowwise().norm();
    for (Index r = 0; r < current.rows(); ++r)
      if (cache.output_norms(r) > 0.0) current.row(r) /= cache.output_norms(r);
  }
  cache.output = std::move(current);
  return cache;
}

Matrix forward_batch(const Mlp& mlp, const Matrix& x) { return forward_cached(mlp, x).output; }

Vector forward(const Mlp& mlp, const Vector& x) {
  check_input(mlp, x.size());
  return forward_batch(mlp, x.transpose()).row(0).transpose();
}

Gradients zeros_like(const Mlp& mlp) {
  Gradients grads;
  grads.reserve(mlp.layers.size());
  for (const auto& layer : mlp.layers)
    grads.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                     Vector::Zero(layer.bias.size())});
  return grads;
}

BackwardResult backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& upstream) {
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols())
    throw ShapeError("upstream gradient shape does not match network output");
  if (!upstream.allFinite()) throw NumericError("non-finite upstream gradient");

  Matrix delta = upstream;
  if (mlp.normalize_output) {
    // d(u/|u|)/du = (I - y y^T) / |u|
    for (Index r = 0; r < delta.rows(); ++r) {
      const double norm = cache.output_norms(r);
      if (norm <= 0.0) continue;
      const auto y = cache.output.row(r);
      delta.row(r) = (delta.row(r) - y * y.dot(delta.row(r))) / norm;
    }
  }

  BackwardResult result;
  result.params = zeros_like(mlp);
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.layers.size() && mlp.activation == Activation::elu)
      delta.array() *= cache.pre[l].unaryExpr([](double u) { return elu_derivative(u); }).array();
    result.params[l].weight = delta.transpose() * cache.inputs[l];
    result.params[l].bias = delta.colwise().sum().transpose();
    delta = delta * mlp.layers[l].weight;
  }
  result.input = std::move(delta);
  return result;
}

void add_l2_gradient(const Mlp& mlp, double coeff, Gradients& grads) {
  if (coeff == 0.0) return;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    grads[l].weight += 2.0 * coeff * mlp.layers[l].weight;
    grads[l].bias += 2.0 * coeff * mlp.layers[l].bias;
  }
}

double param_norm_sq(const Mlp& mlp) {
  double total = 0.0;
  for (const auto& layer : mlp.layers)
    total += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return total;
}

double param_norm_sq(std::span<const Mlp* const> networks) {
  double total = 0.0;
  for (const Mlp* net : networks) total += param_norm_sq(*net);
  return total;
}

double AdamState::effective_lr() const {
  return config.base_lr *
         std::pow(config.decay_rate, static_cast<double>(step) / static_cast<double>(config.decay_period));
}

AdamState make_adam_state(const Mlp& mlp, const AdamConfig& config) {
  if (!(config.base_lr > 0.0)) throw PreconditionError("Adam base_lr must be positive");
  if (!(config.decay_rate > 0.0 && config.decay_rate <= 1.0))
    throw PreconditionError("Adam decay_rate must lie in (0, 1]");
  if (config.decay_period <= 0) throw PreconditionError("Adam decay_period must be positive");
  return AdamState{zeros_like(mlp), zeros_like(mlp), 0, config};
}

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state) {
  if (grads.size() != mlp.layers.size() || state.first.size() != mlp.layers.size())
    throw ShapeError("Adam: gradient layout does not match the network");
  const auto& cfg = state.config;
  const double lr = state.effective_lr();
  const double t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    if (grad.rows() != param.rows() || grad.cols() != param.cols())
      throw ShapeError("Adam: gradient shape does not match parameter");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + cfg.epsilon);
  };
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    update(mlp.layers[l].weight, grads[l].weight, state.first[l].weight, state.second[l].weight);
    update(mlp.layers[l].bias, grads[l].bias, state.first[l].bias, state.second[l].bias);
  }
  ++state.step;
}

double spectral_norm(const Matrix& weight, int max_iterations, double tolerance) {
  if (weight.size() == 0) return 0.0;
  if (weight.rows() == 1 || weight.cols() == 1) return weight.norm();
  Vector v(weight.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 1e-3 * static_cast<double>(i + 1);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    Vector u = weight * v;
    Vector next = weight.transpose() * u;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double estimate = (weight * next).norm();
    const bool converged = std::abs(estimate - sigma) <= tolerance * std::max(1.0, estimate);
    sigma = estimate;
    v = std::move(next);
    if (converged) break;
  }
  return sigma;
}

double lipschitz_upper_bound(const Mlp& mlp) {
  if (mlp.normalize_output)
    throw PreconditionError("Lipschitz bound is undefined for networks with output normalization");
  double bound = 1.0;
  for (const auto& layer : mlp.layers) bound *= spectral_norm(layer.weight);
  return bound;
}

nlohmann::json to_json(const Mlp& mlp) {
  nlohmann::json doc;
  doc["layer_dims"] = mlp.layer_dims();
  doc["activation"] = to_string(mlp.activation);
  doc["output_normalization"] = mlp.normalize_output;
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (const auto& layer : mlp.layers) {
    auto rows = nlohmann::json::array();
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      std::vector<double> row(layer.weight.cols());
      for (Index c = 0; c < layer.weight.cols(); ++c) row[c] = layer.weight(r, c);
      rows.push_back(row);
    }
    weights.push_back(std::move(rows));
    biases.push_back(std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  Mlp mlp;
  mlp.activation = parse_activation(doc.at("activation").get<std::string>());
  mlp.normalize_output = doc.at("output_normalization").get<bool>();
  const auto dims = doc.at("layer_dims").get<std::vector<Index>>();
  const auto& weights = doc.at("weights");
  const auto& biases = doc.at("biases");
  if (dims.size() < 2 || weights.size() + 1 != dims.size() || biases.size() != weights.size())
    throw ShapeError("network JSON: layer_dims, weights and biases disagree");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Layer layer{Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1])};
    const auto& rows = weights[l];
    if (static_cast<Index>(rows.size()) != dims[l + 1]) throw ShapeError("network JSON: weight rows");
    for (Index r = 0; r < dims[l + 1]; ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (static_cast<Index>(row.size()) != dims[l]) throw ShapeError("network JSON: weight cols");
      for (Index c = 0; c < dims[l]; ++c) layer.weight(r, c) = row[c];
    }
    const auto bias = biases[l].get<std::vector<double>>();
    if (static_cast<Index>(bias.size()) != dims[l + 1]) throw ShapeError("network JSON: bias length");
    for (Index r = 0; r < dims[l + 1]; ++r) layer.bias(r) = bias[r];
    mlp.layers.push_back(std::move(layer));
  }
  mlp.validate();
  return mlp;
}

}  // namespace alrite::nn
