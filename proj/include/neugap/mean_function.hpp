#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>
#include <variant>
#include <vector>

#include "neugap/errors.hpp"

namespace neugap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DenseLayer {
  MatrixXd weights;  // out x in
  VectorXd biases;   // out
};

/// Feed-forward network with tanh hidden units and a linear scalar output.
/// layer_sizes = {D, H, 1} gives the input-hidden-output network.
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<DenseLayer> layers;

  int input_dim() const { return layer_sizes.front(); }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (const auto &layer : layers) n += layer.weights.size() + layer.biases.size();
    return n;
  }

  /// All weights and biases zero.
  static MlpParams zeros(std::vector<int> sizes) {
    if (sizes.size() < 2 || sizes.back() != 1) {
      throw DimensionMismatch("mlp layer sizes must end in a scalar output");
    }
    MlpParams p;
    p.layer_sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
      p.layers.push_back({MatrixXd::Zero(p.layer_sizes[l + 1], p.layer_sizes[l]),
                          VectorXd::Zero(p.layer_sizes[l + 1])});
    }
    return p;
  }

  /// Glorot-uniform weights, zero biases.
  static MlpParams glorot(std::vector<int> sizes, std::uint64_t seed) {
    MlpParams p = zeros(std::move(sizes));
    std::mt19937_64 rng(seed);
    for (auto &layer : p.layers) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = dist(rng);
    }
    return p;
  }

  /// Flat layout: per layer, weights row-major then biases.
  VectorXd flatten() const {
    VectorXd out(num_params());
    Eigen::Index k = 0;
    for (const auto &layer : layers) {
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) out(k++) = layer.weights(i, j);
      for (Eigen::Index i = 0; i < layer.biases.size(); ++i) out(k++) = layer.biases(i);
    }
    return out;
  }

  void unflatten(const VectorXd &flat) {
    require_dims(flat.size() == num_params(), "mlp parameter vector has wrong length");
    Eigen::Index k = 0;
    for (auto &layer : layers) {
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = flat(k++);
      for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases(i) = flat(k++);
    }
  }
};

struct ZeroMean {};

/// Either the network mean or the identically-zero mean of a plain GP.
class MeanFunction {
 public:
  MeanFunction() = default;
  MeanFunction(ZeroMean z) : variant_(z) {}
  MeanFunction(MlpParams mlp) : variant_(std::move(mlp)) {}

  bool is_zero() const { return std::holds_alternative<ZeroMean>(variant_); }

  const MlpParams &mlp() const {
    if (is_zero()) throw ZeroVariantHasNoParams();
    return std::get<MlpParams>(variant_);
  }
  MlpParams &mlp() {
    if (is_zero()) throw ZeroVariantHasNoParams();
    return std::get<MlpParams>(variant_);
  }

  Eigen::Index num_params() const { return is_zero() ? 0 : mlp().num_params(); }

  VectorXd flat_params() const { return is_zero() ? VectorXd() : mlp().flatten(); }

  void set_flat_params(const VectorXd &flat) {
    if (is_zero()) {
      require_dims(flat.size() == 0, "zero mean takes no parameters");
      return;
    }
    mlp().unflatten(flat);
  }

 private:
  std::variant<ZeroMean, MlpParams> variant_{ZeroMean{}};
};

namespace detail {

// Activations of each layer for a batch of rows; acts[0] = X.
inline std::vector<MatrixXd> mlp_activations(const MlpParams &p, const MatrixXd &x) {
  if (x.cols() != p.input_dim()) {
    std::ostringstream msg;
    msg << "mean function expects " << p.input_dim() << " inputs, got " << x.cols();
    throw DimensionMismatch(msg.str());
  }
  std::vector<MatrixXd> acts;
  acts.reserve(p.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto &layer = p.layers[l];
    MatrixXd pre = acts.back() * layer.weights.transpose();
    pre.rowwise() += layer.biases.transpose();
    if (l + 1 < p.layers.size()) pre = pre.array().tanh().matrix();
    acts.push_back(std::move(pre));
  }
  return acts;
}

// Returns parameter gradient and, when requested, the input gradient.
inline MlpParams mlp_backprop(const MlpParams &p, const MatrixXd &x, const VectorXd &upstream,
                              MatrixXd *input_grad) {
  require_dims(upstream.size() == x.rows(), "upstream length differs from row count");
  const auto acts = mlp_activations(p, x);
  MlpParams grad = MlpParams::zeros(p.layer_sizes);
  MatrixXd delta = upstream;  // N x 1, gradient w.r.t. pre-activation of the output layer
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    grad.layers[l].weights = delta.transpose() * acts[l];
    grad.layers[l].biases = delta.colwise().sum().transpose();
    MatrixXd back = delta * p.layers[l].weights;  // N x in
    if (l > 0) {
      back.array() *= 1.0 - acts[l].array().square();
    } else if (input_grad != nullptr) {
      *input_grad = back;
    }
    delta = std::move(back);
  }
  return grad;
}

}  // namespace detail

inline VectorXd mean_forward(const MeanFunction &fn, const MatrixXd &x) {
  if (fn.is_zero()) return VectorXd::Zero(x.rows());
  return detail::mlp_activations(fn.mlp(), x).back().col(0);
}

/// Gradient of sum_n upstream_n * g(x_n) with respect to the network parameters.
inline MlpParams mean_backward(const MeanFunction &fn, const MatrixXd &x, const VectorXd &upstream) {
  return detail::mlp_backprop(fn.mlp(), x, upstream, nullptr);
}

/// Row n holds upstream_n * dg(x_n)/dx_n. Zero for the zero mean.
inline MatrixXd mean_input_grad(const MeanFunction &fn, const MatrixXd &x, const VectorXd &upstream) {
  if (fn.is_zero()) return MatrixXd::Zero(x.rows(), x.cols());
  MatrixXd dx;
  detail::mlp_backprop(fn.mlp(), x, upstream, &dx);
  return dx;
}

}  // namespace neugap
