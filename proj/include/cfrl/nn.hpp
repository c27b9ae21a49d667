#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfrl/rng.hpp"
#include "cfrl/types.hpp"

namespace cfrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Output head. Hidden layers always use tanh.
enum class Head {
  Identity,
  /// low + (tanh(z) + 1) / 2 * (high - low), element-wise.
  ScaledTanh,
};

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Activations recorded by a training forward pass. Column j of every matrix
/// belongs to sample j.
struct Tape {
  std::vector<Matrix> inputs;  // input of each layer
  Matrix head_tanh;            // tanh(z) of the last layer (ScaledTanh only)
  Matrix output;
};

/// Gradients of a scalar loss w.r.t. all parameters and the network input.
struct Gradients {
  std::vector<Layer> layers;
  Matrix input;
};

/// Fully connected feed-forward network.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialised network. `dims` = {input, hidden..., output}.
  Mlp(std::vector<std::size_t> dims, Head head, Vec low = {}, Vec high = {});

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  void init_uniform(Rng& rng);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  Head head() const noexcept { return head_; }
  const Vec& low() const noexcept { return low_; }
  const Vec& high() const noexcept { return high_; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  std::size_t num_params() const noexcept;

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Batched forward; columns are samples.
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Tape& tape) const;
  Vec forward(std::span<const double> x) const;

  /// Back-propagates `upstream` = dLoss/dOutput (output_dim x batch) through
  /// the pass recorded in `tape`.
  Gradients backward(const Tape& tape, const Matrix& upstream) const;

  Vec flat_params() const;
  void set_flat_params(std::span<const double> flat);
  bool same_architecture(const Mlp& other) const noexcept;
  bool all_finite() const noexcept;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<std::size_t> dims_;
  Head head_ = Head::Identity;
  Vec low_;
  Vec high_;
  std::vector<Layer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments shaped like the parameters of one network.
struct AdamState {
  AdamConfig config;
  std::vector<Layer> m;
  std::vector<Layer> v;
  long step = 0;

  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg);
};

/// One bias-corrected Adam update. Throws TrainingError on non-finite
/// gradients (parameters are left untouched).
void adam_step(Mlp& net, AdamState& opt, const Gradients& grads);

/// target <- eta * online + (1 - eta) * target.
void soft_update(Mlp& target, const Mlp& online, double eta);

// Checkpoint container (see README, "Checkpoint format").
nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& opt);
AdamState adam_from_json(const nlohmann::json& j, const Mlp& net);

}  // namespace cfrl::nn
