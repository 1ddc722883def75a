#include "disentangle/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "disentangle/errors.hpp"
#include "text_io.hpp"

namespace disentangle::nn {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](double v) { return sigmoid(v); });
      break;
    case Activation::Identity:
      break;
  }
}

// Derivative of the activation, given pre-activations z and activations out.
Matrix activation_derivative(Activation a, const Matrix& z, const Matrix& out) {
  switch (a) {
    case Activation::ReLU:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid:
      return out.array() * (1.0 - out.array());
    case Activation::Identity:
      break;
  }
  return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + std::string(name) +
                    "' (expected relu, sigmoid or identity)");
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers)
    count += static_cast<std::size_t>(layer.weights.size() + layer.biases.size());
  return count;
}

void validate(const Network& net) {
  if (net.layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    if (layer.biases.size() != layer.out_dim())
      throw ConfigError("layer " + std::to_string(k) + ": bias length differs from output dim");
    if (layer.in_dim() <= 0 || layer.out_dim() <= 0)
      throw ConfigError("layer " + std::to_string(k) + ": empty dimension");
    if (k + 1 < net.layers.size() && net.layers[k + 1].in_dim() != layer.out_dim())
      throw ConfigError("layer " + std::to_string(k + 1) + ": input dim " +
                        std::to_string(net.layers[k + 1].in_dim()) + " does not match previous output dim " +
                        std::to_string(layer.out_dim()));
  }
  const auto& last = net.layers.back();
  if (last.out_dim() != 1 || last.activation != Activation::Sigmoid)
    throw ConfigError("final layer must be a single sigmoid node");
}

Network init_network(std::span<const Index> layer_dims,
                     std::span<const Activation> activations, std::uint64_t seed) {
  if (layer_dims.size() < 2)
    throw ConfigError("layer_dims needs at least an input and an output size");
  if (activations.size() != layer_dims.size() - 1)
    throw ConfigError("need one activation per layer (" + std::to_string(layer_dims.size() - 1) +
                      "), got " + std::to_string(activations.size()));
  for (Index d : layer_dims)
    if (d <= 0) throw ConfigError("layer dims must be positive");

  std::mt19937_64 rng(seed);
  Network net;
  net.layers.reserve(activations.size());
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    const Index fan_in = layer_dims[k];
    const Index fan_out = layer_dims[k + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
    layer.biases = Vector::Zero(fan_out);
    layer.activation = activations[k];
    net.layers.push_back(std::move(layer));
  }
  validate(net);
  return net;
}

ForwardResult forward(const Network& net, const Matrix& features) {
  if (features.cols() != net.input_dim())
    throw ShapeError("forward: features have " + std::to_string(features.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  ForwardResult result;
  auto& cache = result.cache;
  cache.inputs.reserve(net.layers.size() + 1);
  cache.pre_activations.reserve(net.layers.size());
  cache.inputs.push_back(features);
  for (const auto& layer : net.layers) {
    Matrix z = cache.inputs.back() * layer.weights.transpose();
    z.rowwise() += layer.biases.transpose();
    Matrix a = z;
    apply_activation(layer.activation, a);
    cache.pre_activations.push_back(std::move(z));
    cache.inputs.push_back(std::move(a));
  }
  const Matrix& out = cache.inputs.back();
  const Index n = out.rows();
  result.probabilities.resize(n);
  cache.clamped.assign(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const double p = out(i, 0);
    const double c = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    cache.clamped[static_cast<std::size_t>(i)] = (c != p);
    result.probabilities(i) = c;
  }
  cache.source = &net;
  cache.revision = net.revision;
  return result;
}

Vector predict(const Network& net, const Matrix& features) {
  return forward(net, features).probabilities;
}

bool ParamGradients::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

ParamGradients zero_gradients(const Network& net) {
  ParamGradients g;
  for (const auto& layer : net.layers) {
    g.weights.push_back(Matrix::Zero(layer.out_dim(), layer.in_dim()));
    g.biases.push_back(Vector::Zero(layer.out_dim()));
  }
  return g;
}

ParamGradients backward(const Network& net, const ForwardCache& cache, const Vector& upstream) {
  if (cache.source != &net || cache.revision != net.revision ||
      cache.pre_activations.size() != net.layers.size() ||
      cache.inputs.size() != net.layers.size() + 1)
    throw InternalError("backward: cache does not belong to this network state");
  const Index n = cache.inputs.front().rows();
  if (upstream.size() != n)
    throw ShapeError("backward: upstream gradient has " + std::to_string(upstream.size()) +
                     " entries, batch has " + std::to_string(n));

  ParamGradients g;
  g.weights.resize(net.layers.size());
  g.biases.resize(net.layers.size());

  Matrix delta = upstream;  // n x 1, gradient w.r.t. the clamped output
  for (Index i = 0; i < n; ++i)
    if (cache.clamped[static_cast<std::size_t>(i)]) delta(i, 0) = 0.0;

  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& layer = net.layers[k];
    delta.array() *= activation_derivative(layer.activation, cache.pre_activations[k],
                                           cache.inputs[k + 1])
                         .array();
    g.weights[k] = delta.transpose() * cache.inputs[k];
    g.biases[k] = delta.colwise().sum().transpose();
    if (k > 0) delta = delta * layer.weights;
  }
  return g;
}

OptimizerState make_optimizer_state(const Network& net, AdamConfig config) {
  OptimizerState s;
  s.config = config;
  for (const auto& layer : net.layers) {
    s.m_weights.push_back(Matrix::Zero(layer.out_dim(), layer.in_dim()));
    s.v_weights.push_back(Matrix::Zero(layer.out_dim(), layer.in_dim()));
    s.m_biases.push_back(Vector::Zero(layer.out_dim()));
    s.v_biases.push_back(Vector::Zero(layer.out_dim()));
  }
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<double> first_moment, std::span<double> second_moment,
                 std::uint64_t step, const AdamConfig& config) {
  if (grads.size() != params.size() || first_moment.size() != params.size() ||
      second_moment.size() != params.size())
    throw ShapeError("adam_update: parameter/gradient/moment sizes differ");
  const double t = static_cast<double>(step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    first_moment[i] = config.beta1 * first_moment[i] + (1.0 - config.beta1) * g;
    second_moment[i] = config.beta2 * second_moment[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = first_moment[i] / bias1;
    const double v_hat = second_moment[i] / bias2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

namespace {

template <typename Dense>
std::span<double> as_span(Dense& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Dense>
std::span<const double> as_span(const Dense& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

void optimizer_step(Network& net, const ParamGradients& grads, OptimizerState& state) {
  if (grads.weights.size() != net.layers.size() || state.m_weights.size() != net.layers.size())
    throw ShapeError("optimizer_step: gradient/state layer count differs from network");
  if (!grads.all_finite())
    throw NumericalError("optimizer_step: non-finite gradient at step " +
                         std::to_string(state.step + 1));
  ++state.step;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& layer = net.layers[k];
    adam_update(as_span(layer.weights), as_span(grads.weights[k]), as_span(state.m_weights[k]),
                as_span(state.v_weights[k]), state.step, state.config);
    adam_update(as_span(layer.biases), as_span(grads.biases[k]), as_span(state.m_biases[k]),
                as_span(state.v_biases[k]), state.step, state.config);
  }
  ++net.revision;
}

namespace {
constexpr std::string_view kNetworkMagic = "disentangle-network";
}

void write_network(std::ostream& os, const Network& net) {
  os << kNetworkMagic << " 1\n";
  os << "layers " << net.layers.size() << '\n';
  for (const auto& layer : net.layers) {
    os << "layer " << layer.out_dim() << ' ' << layer.in_dim() << ' '
       << to_string(layer.activation) << '\n';
    for (Index r = 0; r < layer.out_dim(); ++r) {
      for (Index c = 0; c < layer.in_dim(); ++c) {
        if (c) os << ' ';
        os << detail::format_double(layer.weights(r, c));
      }
      os << '\n';
    }
    for (Index r = 0; r < layer.out_dim(); ++r) {
      if (r) os << ' ';
      os << detail::format_double(layer.biases(r));
    }
    os << '\n';
  }
}

Network read_network(std::istream& is) {
  std::string magic, token;
  int version = 0;
  if (!(is >> magic >> version) || magic != kNetworkMagic || version != 1)
    throw ConfigError("not a network record (bad header)");
  std::size_t count = 0;
  if (!(is >> token >> count) || token != "layers")
    throw ConfigError("network record: expected 'layers <count>'");
  Network net;
  for (std::size_t k = 0; k < count; ++k) {
    Index out = 0, in = 0;
    std::string act;
    if (!(is >> token >> out >> in >> act) || token != "layer" || out <= 0 || in <= 0)
      throw ConfigError("network record: malformed layer header " + std::to_string(k));
    DenseLayer layer;
    layer.activation = parse_activation(act);
    layer.weights.resize(out, in);
    layer.biases.resize(out);
    for (Index r = 0; r < out; ++r)
      for (Index c = 0; c < in; ++c) {
        if (!(is >> token)) throw ConfigError("network record: truncated weights");
        layer.weights(r, c) = detail::parse_double(token);
      }
    for (Index r = 0; r < out; ++r) {
      if (!(is >> token)) throw ConfigError("network record: truncated biases");
      layer.biases(r) = detail::parse_double(token);
    }
    net.layers.push_back(std::move(layer));
  }
  validate(net);
  return net;
}

}  // namespace disentangle::nn
