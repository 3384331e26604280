#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/random.hpp"

namespace dpmine {

enum class ActivationKind : std::uint8_t {
  Relu = 0,
  LeakyRelu = 1,
  Tanh = 2,
  Sigmoid = 3,
  Identity = 4,
};

struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double slope = 0.2; // leaky relu only

  static constexpr Activation relu() { return {ActivationKind::Relu, 0.0}; }
  static constexpr Activation leaky_relu(double s = 0.2) { return {ActivationKind::LeakyRelu, s}; }
  static constexpr Activation tanh() { return {ActivationKind::Tanh, 0.0}; }
  static constexpr Activation sigmoid() { return {ActivationKind::Sigmoid, 0.0}; }
  static constexpr Activation identity() { return {ActivationKind::Identity, 0.0}; }

  friend bool operator==(const Activation &, const Activation &) = default;
};

std::string to_string(const Activation &act);
Activation parse_activation(const std::string &text);

/// Intermediate values of a batched forward pass. post[0] is the input batch;
/// pre[l], post[l + 1] belong to layer l.
struct ForwardCache {
  std::vector<MatrixXd> pre;
  std::vector<MatrixXd> post;
};

struct Gradients {
  VectorXd params;  ///< summed over the batch
  MatrixXd inputs;  ///< one row per batch row
};

/// Dense feed-forward network. Parameters live in one flat vector laid out
/// layer by layer as [W_l (out x in, column-major), b_l].
class Mlp {
public:
  Mlp() = default;
  /// Zero-initialized network.
  Mlp(std::vector<Index> layer_dims, std::vector<Activation> activations);

  /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static Mlp glorot(std::vector<Index> layer_dims, std::vector<Activation> activations, Rng &rng);

  [[nodiscard]] Index input_dim() const noexcept { return dims_.front(); }
  [[nodiscard]] Index output_dim() const noexcept { return dims_.back(); }
  [[nodiscard]] Index num_layers() const noexcept { return static_cast<Index>(acts_.size()); }
  [[nodiscard]] Index num_params() const noexcept { return params_.size(); }
  [[nodiscard]] const std::vector<Index> &layer_dims() const noexcept { return dims_; }
  [[nodiscard]] const std::vector<Activation> &activations() const noexcept { return acts_; }

  [[nodiscard]] const VectorXd &params() const noexcept { return params_; }
  [[nodiscard]] VectorXd &params() noexcept { return params_; }
  void set_params(const VectorXd &params);

  [[nodiscard]] Eigen::Map<const MatrixXd> weight(Index layer) const;
  [[nodiscard]] Eigen::Map<MatrixXd> weight(Index layer);
  [[nodiscard]] Eigen::Map<const VectorXd> bias(Index layer) const;
  [[nodiscard]] Eigen::Map<VectorXd> bias(Index layer);

  /// Batched forward pass, one sample per row.
  MatrixXd forward(const MatrixXd &batch, ForwardCache *cache = nullptr) const;

  /// Reverse pass for the loss sum_b <upstream_b, output_b>.
  Gradients backward(const ForwardCache &cache, const MatrixXd &upstream) const;

private:
  std::vector<Index> dims_{1};
  std::vector<Activation> acts_;
  std::vector<Index> offsets_; // start of W_l in params_
  VectorXd params_;
};

// Free-function surface.

VectorXd forward(const Mlp &net, const VectorXd &input);

/// Parameter gradient of sum_b <upstream_b, net(input_b)>.
VectorXd backward(const Mlp &net, const MatrixXd &input_batch, const MatrixXd &upstream);

/// d net(x) / dx for a scalar-output network.
VectorXd input_gradient(const Mlp &net, const VectorXd &input);

/// Row-wise input gradients of a scalar-output network.
MatrixXd input_gradients(const Mlp &net, const MatrixXd &batch);

enum class PenaltyGradMode { DoubleBackprop, FiniteDifference };

struct PenaltyResult {
  double value = 0.0;
  VectorXd param_grad;
};

inline constexpr double kGradNormFloor = 1e-12;

/// mean_b (||grad_x net(x_b)|| - 1)^2 and its parameter gradient.
PenaltyResult grad_penalty_value_and_grad(const Mlp &net, const MatrixXd &points,
                                          PenaltyGradMode mode = PenaltyGradMode::DoubleBackprop);

struct AdamState {
  std::int64_t step_count = 0;
  VectorXd first_moment;
  VectorXd second_moment;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static AdamState for_size(Index n, double learning_rate = 2e-4);
};

/// One bias-corrected Adam descent step on `params`.
void adam_step(AdamState &state, VectorXd &params, const VectorXd &grads);

// Checkpoint blob: "DPMN", u32 version, u32 layers, u32 dims[layers + 1],
// per layer {u8 tag, f64 slope}, u64 count, f64 params[count]; little-endian.
inline constexpr std::uint32_t kBlobVersion = 1;

std::vector<std::uint8_t> serialize(const Mlp &net);
Mlp deserialize(std::span<const std::uint8_t> blob);
void save_network(const Mlp &net, const std::filesystem::path &path);
Mlp load_network(const std::filesystem::path &path);

} // namespace dpmine
