#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "smpc/errors.hpp"
#include "smpc/mlp.hpp"

namespace smpc {

enum class OptimizerKind { kAdam, kSgd };

inline std::string_view optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

inline OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw TrainingError("unknown optimizer '" + std::string(name) + "'");
}

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  GradientBundle first_moment;
  GradientBundle second_moment;
  std::int64_t step = 0;

  static OptimizerState for_params(const MlpParams& p, OptimizerKind kind,
                                   double learning_rate) {
    OptimizerState s;
    s.kind = kind;
    s.learning_rate = learning_rate;
    s.first_moment = GradientBundle::zeros_like(p);
    s.second_moment = GradientBundle::zeros_like(p);
    return s;
  }
};

namespace detail {

template <typename Param, typename Grad, typename Moment>
void adam_update(Param& param, const Grad& grad, Moment& m, Moment& v,
                 const OptimizerState& s, double bias1, double bias2) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseAbs2();
  param.array() -= s.learning_rate * (m.array() / bias1) /
                   ((v.array() / bias2).sqrt() + s.epsilon);
}

}  // namespace detail

// One descent step. Throws TrainingError (parameters untouched) when the
// gradient contains NaN or infinity.
inline void optimizer_step(OptimizerState& state, MlpParams& params,
                           const GradientBundle& grads) {
  if (grads.weights.size() != params.num_layers()) {
    throw DimensionError("gradient bundle does not match parameters");
  }
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw DimensionError("gradient layer " + std::to_string(l) +
                           " has the wrong shape");
    }
  }
  if (!grads.all_finite()) throw TrainingError("non-finite gradient");

  ++state.step;
  if (state.kind == OptimizerKind::kSgd) {
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      params.weights[l] -= state.learning_rate * grads.weights[l];
      params.biases[l] -= state.learning_rate * grads.biases[l];
    }
    return;
  }
  if (state.first_moment.weights.size() != params.num_layers()) {
    state.first_moment = GradientBundle::zeros_like(params);
    state.second_moment = GradientBundle::zeros_like(params);
  }
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    detail::adam_update(params.weights[l], grads.weights[l],
                        state.first_moment.weights[l],
                        state.second_moment.weights[l], state, bias1, bias2);
    detail::adam_update(params.biases[l], grads.biases[l],
                        state.first_moment.biases[l],
                        state.second_moment.biases[l], state, bias1, bias2);
  }
}

}  // namespace smpc
