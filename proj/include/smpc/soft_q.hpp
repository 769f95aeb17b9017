#pragma once

// Terminal soft Q-function Q(s, a) and its fitted-iteration update.
//
// The network sees [s / state_scale; a / action_scale] and its output is
// multiplied by output_scale, so raw network values stay O(1) for tasks
// whose discounted costs are in the hundreds.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smpc/environments.hpp"
#include "smpc/errors.hpp"
#include "smpc/mlp.hpp"
#include "smpc/optimizer.hpp"
#include "smpc/random.hpp"

namespace smpc {

struct SoftQConfig {
  int hidden_width = 64;
  int hidden_layers = 2;
  Activation activation = Activation::kTanh;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 3e-4;
  bool target_network = true;
  double polyak = 0.995;
  double output_scale = 1.0;
};

// y_i = cost_i + gamma * v_i, or y_i = cost_i where done_i.
struct ValueTargetBatch {
  Eigen::VectorXd targets;
  std::vector<bool> done;
};

inline ValueTargetBatch build_targets(const Eigen::VectorXd& costs,
                                      const Eigen::VectorXd& next_values,
                                      const std::vector<bool>& done,
                                      double gamma) {
  if (next_values.size() != costs.size() ||
      done.size() != static_cast<std::size_t>(costs.size())) {
    throw DimensionError("target inputs have different lengths");
  }
  ValueTargetBatch out;
  out.targets.resize(costs.size());
  out.done = done;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    if (done[static_cast<std::size_t>(i)]) {
      out.targets[i] = costs[i];
      continue;
    }
    if (!std::isfinite(next_values[i])) {
      throw TrainingError("non-finite planner value at sample " +
                          std::to_string(i));
    }
    out.targets[i] = costs[i] + gamma * next_values[i];
  }
  return out;
}

class SoftQFunction {
 public:
  SoftQFunction() = default;

  SoftQFunction(int state_dim, int action_dim, const SoftQConfig& cfg, Rng& rng)
      : cfg_(cfg),
        input_scale_(Eigen::VectorXd::Ones(state_dim + action_dim)),
        state_dim_(state_dim),
        action_dim_(action_dim) {
    net_ = make_mlp(layer_sizes(state_dim + action_dim, cfg.hidden_width,
                                cfg.hidden_layers, 1),
                    cfg.activation, rng);
    reset_optimizer();
    if (cfg_.target_network) target_ = net_;
  }

  // Q-function for an environment, with its natural input and value scales.
  // A non-positive cfg.output_scale selects the environment's value scale.
  static SoftQFunction for_env(const EnvSpec& spec, SoftQConfig cfg, Rng& rng) {
    if (cfg.output_scale <= 0.0) cfg.output_scale = spec.value_scale;
    SoftQFunction q(spec.state_dim, spec.action_dim, cfg, rng);
    Eigen::VectorXd scale(spec.state_dim + spec.action_dim);
    scale << spec.state_scale,
        spec.action_high.cwiseAbs().cwiseMax(spec.action_low.cwiseAbs());
    q.set_input_scale(scale);
    return q;
  }

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const SoftQConfig& config() const { return cfg_; }
  const MlpParams& params() const { return net_; }
  MlpParams& params() { return net_; }
  const std::optional<MlpParams>& target_params() const { return target_; }
  std::optional<MlpParams>& target_params() { return target_; }
  const OptimizerState& optimizer() const { return opt_; }
  OptimizerState& optimizer() { return opt_; }
  const Eigen::VectorXd& input_scale() const { return input_scale_; }
  double output_scale() const { return cfg_.output_scale; }
  double polyak() const { return cfg_.polyak; }

  void set_input_scale(const Eigen::VectorXd& scale) {
    if (scale.size() != state_dim_ + action_dim_ || (scale.array() <= 0).any()) {
      throw DimensionError("input scale must be positive, one per input");
    }
    input_scale_ = scale;
  }

  void set_params(MlpParams p) {
    p.validate();
    if (p.input_dim() != state_dim_ + action_dim_ || p.output_dim() != 1) {
      throw DimensionError("Q network must map (s, a) to a scalar");
    }
    net_ = std::move(p);
    if (target_) target_ = net_;
    reset_optimizer();
  }

  void reset_optimizer() {
    opt_ = OptimizerState::for_params(net_, cfg_.optimizer, cfg_.learning_rate);
  }

  // Batched Q(s, a); `use_target` reads the Polyak-averaged copy when one
  // exists.
  Eigen::VectorXd values(const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& actions,
                         bool use_target = false) const {
    const MlpParams& p = (use_target && target_) ? *target_ : net_;
    return cfg_.output_scale * forward_batch(p, inputs(states, actions)).row(0).transpose();
  }

  double value(const Eigen::VectorXd& state, const Eigen::VectorXd& action,
               bool use_target = false) const {
    if (!state.allFinite() || !action.allFinite()) {
      throw DimensionError("q_value: non-finite input");
    }
    return values(state, action, use_target)[0];
  }

  // One optimiser step on mean((Q - y)^2) / output_scale^2. Returns the
  // pre-step loss.
  double update(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                const ValueTargetBatch& targets) {
    const Eigen::Index n = states.cols();
    if (targets.targets.size() != n || actions.cols() != n) {
      throw DimensionError("q_update: batch and targets are not aligned");
    }
    if (n == 0) throw TrainingError("empty Q training batch");
    ForwardCache cache;
    const Eigen::RowVectorXd out =
        forward_batch(net_, inputs(states, actions), &cache).row(0);
    const Eigen::RowVectorXd err =
        out - targets.targets.transpose() / cfg_.output_scale;
    const double loss = err.squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(loss)) throw TrainingError("non-finite Q loss");
    const Eigen::MatrixXd upstream = (2.0 / static_cast<double>(n)) * err;
    optimizer_step(opt_, net_, backward_batch(net_, cache, upstream).grads);
    update_target();
    return loss;
  }

  // target <- polyak * target + (1 - polyak) * live
  void update_target() {
    if (!target_) return;
    const double rho = cfg_.polyak;
    for (std::size_t l = 0; l < net_.num_layers(); ++l) {
      target_->weights[l] = rho * target_->weights[l] + (1.0 - rho) * net_.weights[l];
      target_->biases[l] = rho * target_->biases[l] + (1.0 - rho) * net_.biases[l];
    }
  }

 private:
  Eigen::MatrixXd inputs(const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& actions) const {
    if (states.rows() != state_dim_ || actions.rows() != action_dim_ ||
        states.cols() != actions.cols()) {
      throw DimensionError("Q input shapes do not match");
    }
    Eigen::MatrixXd x(state_dim_ + action_dim_, states.cols());
    x << states, actions;
    return x.array().colwise() / input_scale_.array();
  }

  SoftQConfig cfg_;
  MlpParams net_;
  std::optional<MlpParams> target_;
  OptimizerState opt_;
  Eigen::VectorXd input_scale_;
  int state_dim_ = 0;
  int action_dim_ = 0;
};

}  // namespace smpc
