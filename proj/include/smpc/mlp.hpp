#pragma once

// Small feed-forward network with exact reverse-mode gradients.
//
// Samples are stored column-wise: a batch of M inputs is an (in x M) matrix.
// Hidden layers use tanh or ReLU, the output layer is affine.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "smpc/errors.hpp"
#include "smpc/random.hpp"

namespace smpc {

enum class Activation { kTanh, kRelu };

inline std::string_view activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw DimensionError("unknown activation '" + std::string(name) + "'");
}

struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // layer l: (out_l x in_l)
  std::vector<Eigen::VectorXd> biases;
  std::vector<Activation> activations;   // one per hidden layer

  std::size_t num_layers() const { return weights.size(); }
  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    }
    return n;
  }

  void validate() const {
    if (weights.empty()) throw DimensionError("network has no layers");
    if (biases.size() != weights.size() ||
        activations.size() + 1 != weights.size()) {
      throw DimensionError("layer, bias and activation counts disagree");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (biases[l].size() != weights[l].rows()) {
        throw DimensionError("bias " + std::to_string(l) +
                             " does not match its layer output size");
      }
      if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
        throw DimensionError("layer " + std::to_string(l) +
                             " input size does not match previous output");
      }
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }
};

// Same layout as the parameters it differentiates.
struct GradientBundle {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static GradientBundle zeros_like(const MlpParams& p) {
    GradientBundle g;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(),
                                                p.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
    }
    return g;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  GradientBundle& operator*=(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    return *this;
  }

  GradientBundle& operator+=(const GradientBundle& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }
};

// Fan-in scaled uniform initialisation: U(-1/sqrt(in), 1/sqrt(in)).
inline MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden,
                          Rng& rng) {
  if (sizes.size() < 2) throw DimensionError("need at least input and output");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] <= 0 || sizes[l + 1] <= 0) {
      throw DimensionError("layer sizes must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    Eigen::VectorXd b(sizes[l + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = dist(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
    if (l + 2 < sizes.size()) p.activations.push_back(hidden);
  }
  return p;
}

inline std::vector<int> layer_sizes(int input, int width, int depth,
                                    int output) {
  std::vector<int> sizes{input};
  for (int i = 0; i < depth; ++i) sizes.push_back(width);
  sizes.push_back(output);
  return sizes;
}

namespace detail {

inline void activate(Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    // tanh(x) = 1 - 2 / (exp(2x) + 1); vectorises through Eigen's exp.
    z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
  }
}

// Multiplies `grad` in place by the activation derivative, expressed
// through the activated value h.
inline void activation_backward(Eigen::MatrixXd& grad, const Eigen::MatrixXd& h,
                                Activation a) {
  if (a == Activation::kRelu) {
    grad = (h.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - h.array().square();
  }
}

}  // namespace detail

// Activations kept from a forward pass: layer_inputs[l] feeds layer l.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> layer_inputs;
};

inline Eigen::MatrixXd forward_batch(const MlpParams& p,
                                     const Eigen::MatrixXd& inputs,
                                     ForwardCache* cache = nullptr) {
  if (inputs.rows() != p.input_dim()) {
    throw DimensionError("network expects input of size " +
                         std::to_string(p.input_dim()) + ", got " +
                         std::to_string(inputs.rows()));
  }
  if (cache) cache->layer_inputs.clear();
  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Eigen::MatrixXd z = p.weights[l] * x;
    z.colwise() += p.biases[l];
    if (l + 1 < p.num_layers()) detail::activate(z, p.activations[l]);
    if (cache) cache->layer_inputs.push_back(std::move(x));
    x = std::move(z);
  }
  return x;
}

inline Eigen::VectorXd forward(const MlpParams& p,
                               const Eigen::VectorXd& input) {
  return forward_batch(p, input);
}

struct BackwardResult {
  GradientBundle grads;
  Eigen::MatrixXd input_grad;
};

// Gradients of sum over columns of upstream(:, m)' * f(inputs(:, m)).
// Parameter gradients are summed over the batch.
inline BackwardResult backward_batch(const MlpParams& p,
                                     const ForwardCache& cache,
                                     const Eigen::MatrixXd& upstream) {
  if (cache.layer_inputs.size() != p.num_layers()) {
    throw DimensionError("forward cache does not match the network");
  }
  if (upstream.rows() != p.output_dim() ||
      upstream.cols() != cache.layer_inputs.front().cols()) {
    throw DimensionError("upstream gradient shape does not match output");
  }
  BackwardResult out;
  out.grads.weights.resize(p.num_layers());
  out.grads.biases.resize(p.num_layers());
  Eigen::MatrixXd g = upstream;
  for (std::size_t k = p.num_layers(); k-- > 0;) {
    const Eigen::MatrixXd& x = cache.layer_inputs[k];
    out.grads.weights[k].noalias() = g * x.transpose();
    out.grads.biases[k] = g.rowwise().sum();
    Eigen::MatrixXd gin = p.weights[k].transpose() * g;
    if (k > 0) detail::activation_backward(gin, x, p.activations[k - 1]);
    g = std::move(gin);
  }
  out.input_grad = std::move(g);
  return out;
}

inline BackwardResult backward_batch(const MlpParams& p,
                                     const Eigen::MatrixXd& inputs,
                                     const Eigen::MatrixXd& upstream) {
  ForwardCache cache;
  forward_batch(p, inputs, &cache);
  return backward_batch(p, cache, upstream);
}

struct SingleBackward {
  GradientBundle grads;
  Eigen::VectorXd input_grad;
};

inline SingleBackward backward(const MlpParams& p, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& upstream) {
  BackwardResult r = backward_batch(p, Eigen::MatrixXd(input),
                                    Eigen::MatrixXd(upstream));
  return {std::move(r.grads), r.input_grad.col(0)};
}

}  // namespace smpc
