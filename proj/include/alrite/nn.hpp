#pragma once

#include "alrite/common.hpp"
#include "alrite/rng.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

// Dense feed-forward networks with exact reverse-mode gradients and an Adam
// optimizer. Batches are row-major in the statistical sense: one sample per
// row of the input matrix.
namespace alrite::nn {

enum class Activation { elu, identity };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& name);

/// ELU(u) = u for u >= 0, exp(u) - 1 otherwise.
double elu(double u);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct Mlp {
  std::vector<Layer> layers;
  Activation activation = Activation::elu;  // hidden layers only
  bool normalize_output = false;            // unit-L2 rescale of the final affine output

  Index input_dim() const;
  Index output_dim() const;
  std::vector<Index> layer_dims() const;

  /// Throws ShapeError / NumericError when the invariants are broken.
  void validate() const;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
Mlp make_mlp(std::span<const Index> layer_dims, Activation activation, bool normalize_output,
             Rng& rng);

Vector forward(const Mlp& mlp, const Vector& x);
Matrix forward_batch(const Mlp& mlp, const Matrix& x);

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // affine output of each layer
  Vector output_norms;         // per-row norm before normalization (normalize_output only)
  Matrix output;
};

ForwardCache forward_cached(const Mlp& mlp, const Matrix& x);

/// Gradients share the parameter layout.
using Gradients = std::vector<Layer>;

Gradients zeros_like(const Mlp& mlp);

struct BackwardResult {
  Gradients params;
  Matrix input;  // d loss / d input, one row per sample
};

/// Propagates `upstream` (d loss / d output, same shape as cache.output) back
/// through the network. Throws NumericError on non-finite upstream values.
BackwardResult backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& upstream);

/// grads += 2 * coeff * theta for every weight and bias.
void add_l2_gradient(const Mlp& mlp, double coeff, Gradients& grads);

/// Sum of squared weights and biases.
double param_norm_sq(const Mlp& mlp);
double param_norm_sq(std::span<const Mlp* const> networks);

struct AdamConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 0.97;
  long decay_period = 100;
};

struct AdamState {
  Gradients first;
  Gradients second;
  long step = 0;
  AdamConfig config;

  /// base_lr * decay_rate^(step / decay_period), evaluated before the update.
  double effective_lr() const;
};

AdamState make_adam_state(const Mlp& mlp, const AdamConfig& config);

void adam_step(Mlp& mlp, const Gradients& grads, AdamState& state);

/// Largest singular value by power iteration on W^T W.
double spectral_norm(const Matrix& weight, int max_iterations = 50, double tolerance = 1e-7);

/// Product of per-layer spectral norms; ELU and identity are 1-Lipschitz.
double lipschitz_upper_bound(const Mlp& mlp);

nlohmann::json to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& doc);

}  // namespace alrite::nn
