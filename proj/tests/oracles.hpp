#pragma once

// Independent reference implementations used only by tests: plain scalar
// loops and central finite differences. Nothing here calls the code it checks
// except where a value (never a gradient) is needed to build a function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "disentangle/nn.hpp"

namespace oracle {

using disentangle::nn::Activation;
using disentangle::nn::Network;

inline double clamp_p(double p) { return std::min(std::max(p, 1e-7), 1.0 - 1e-7); }

inline double bce(const std::vector<double>& pred, const std::vector<double>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clamp_p(pred[i]);
    s += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -s / static_cast<double>(pred.size());
}

inline double mse(const std::vector<double>& est, const std::vector<double>& truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) s += (truth[i] - est[i]) * (truth[i] - est[i]);
  return s / static_cast<double>(est.size());
}

inline double mape(const std::vector<double>& est, const std::vector<double>& truth) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (truth[i] <= 1e-6) continue;
    s += std::fabs(truth[i] - est[i]) / truth[i];
    ++n;
  }
  return s / static_cast<double>(n);
}

inline double aggregate(const std::map<std::string, double>& means,
                        const std::map<std::string, double>& targets) {
  double s = 0.0;
  for (const auto& [k, t] : targets) {
    const double d = t - means.at(k);
    s += d * d;
  }
  return s;
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU:
      return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity:
      return z;
  }
  return z;
}

/// Row-by-row scalar forward pass with the same output clamp.
inline std::vector<double> forward(const Network& net, const disentangle::nn::Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> a(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) a[static_cast<std::size_t>(c)] = x(r, c);
    for (const auto& layer : net.layers) {
      std::vector<double> next(static_cast<std::size_t>(layer.out_dim()));
      for (Eigen::Index o = 0; o < layer.out_dim(); ++o) {
        double z = layer.biases(o);
        for (Eigen::Index i = 0; i < layer.in_dim(); ++i) z += layer.weights(o, i) * a[static_cast<std::size_t>(i)];
        next[static_cast<std::size_t>(o)] = activate(layer.activation, z);
      }
      a = std::move(next);
    }
    out[static_cast<std::size_t>(r)] = clamp_p(a[0]);
  }
  return out;
}

inline double central_difference(const std::function<double()>& f, double& param, double h = 1e-5) {
  const double saved = param;
  param = saved + h;
  const double up = f();
  param = saved - h;
  const double down = f();
  param = saved;
  return (up - down) / (2.0 * h);
}

/// Relative error with an absolute floor, so gradients that are zero up to
/// rounding do not count as failures.
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-9) {
  const double diff = std::fabs(analytic - numeric);
  if (diff <= abs_floor) return true;
  return diff / std::max(std::fabs(analytic), std::fabs(numeric)) <= rel;
}

inline std::vector<double> to_std(const disentangle::nn::Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline disentangle::nn::Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const disentangle::nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace oracle
