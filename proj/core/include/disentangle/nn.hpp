#pragma once

// Small dense feed-forward networks with exact reverse-mode gradients and an
// adaptive-moment optimizer. Every latent probability head is one of these:
// a stack of dense layers ending in a single sigmoid output.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace disentangle::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Lower/upper clamp applied to every head output before it reaches a log.
inline constexpr double kProbabilityEpsilon = 1e-7;

enum class Activation { ReLU, Sigmoid, Identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector biases;   // out_dim
  Activation activation = Activation::Identity;

  [[nodiscard]] Index in_dim() const { return weights.cols(); }
  [[nodiscard]] Index out_dim() const { return weights.rows(); }
};

struct Network {
  std::vector<DenseLayer> layers;
  // Bumped by every optimizer step; lets backward() reject stale caches.
  std::uint64_t revision = 0;

  [[nodiscard]] Index input_dim() const {
    return layers.empty() ? 0 : layers.front().in_dim();
  }
  [[nodiscard]] std::size_t parameter_count() const;
};

/// Throws ConfigError unless adjacent dims agree and the last layer is a
/// single sigmoid node.
void validate(const Network& net);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
Network init_network(std::span<const Index> layer_dims,
                     std::span<const Activation> activations,
                     std::uint64_t seed);

struct ForwardCache {
  // inputs[k] is the input to layer k; inputs.back() is the final activation.
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
  // Which outputs were clamped into [eps, 1-eps]; their derivative is zero.
  std::vector<bool> clamped;
  const Network* source = nullptr;
  std::uint64_t revision = 0;
};

struct ForwardResult {
  Vector probabilities;
  ForwardCache cache;
};

/// features is n x input_dim; returns clamped probabilities in [eps, 1-eps].
ForwardResult forward(const Network& net, const Matrix& features);

/// Same as forward() without keeping the activation record.
Vector predict(const Network& net, const Matrix& features);

struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  [[nodiscard]] bool all_finite() const;
};

ParamGradients zero_gradients(const Network& net);

/// Gradient of sum_i upstream[i] * output[i] with respect to every parameter.
ParamGradients backward(const Network& net, const ForwardCache& cache,
                        const Vector& upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_biases, v_biases;
};

OptimizerState make_optimizer_state(const Network& net, AdamConfig config = {});

/// Adaptive-moment update of a flat parameter block. `step` is the 1-based
/// step index used for bias correction.
void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<double> first_moment, std::span<double> second_moment,
                 std::uint64_t step, const AdamConfig& config);

/// Throws NumericalError on a non-finite gradient, leaving net untouched.
void optimizer_step(Network& net, const ParamGradients& grads, OptimizerState& state);

// Text record: header, then per layer "layer <out> <in> <activation>",
// out rows of row-major weights, one line of biases.
void write_network(std::ostream& os, const Network& net);
Network read_network(std::istream& is);

}  // namespace disentangle::nn
