#pragma once

// Ensemble of one-step models s' = s + unscale(f(normalize(s, a))).
//
// Each member predicts the state delta divided by its running standard
// deviation; a zero output therefore leaves the state unchanged. Normaliser
// statistics are updated only from real transitions (observe()) and are
// read-only while planning, so predict() is a pure function of the ensemble.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smpc/environments.hpp"
#include "smpc/errors.hpp"
#include "smpc/mlp.hpp"
#include "smpc/optimizer.hpp"
#include "smpc/random.hpp"

namespace smpc {

// Per-dimension running mean and standard deviation (Welford).
struct Normalizer {
  static constexpr double kMinStd = 1e-6;

  Eigen::VectorXd mean;
  Eigen::VectorXd m2;
  double count = 0.0;

  explicit Normalizer(Eigen::Index dim = 0)
      : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}

  Eigen::Index dim() const { return mean.size(); }

  Eigen::VectorXd stddev() const {
    if (count < 2.0) return Eigen::VectorXd::Ones(dim());
    return (m2 / count).cwiseSqrt().cwiseMax(kMinStd);
  }

  void update(const Eigen::MatrixXd& samples) {
    if (samples.rows() != dim()) {
      throw DimensionError("normaliser update has wrong dimension");
    }
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      count += 1.0;
      const Eigen::VectorXd d = samples.col(j) - mean;
      mean += d / count;
      m2 += d.cwiseProduct(samples.col(j) - mean);
    }
  }

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
    const Eigen::VectorXd inv = stddev().cwiseInverse();
    return (x.colwise() - mean).array().colwise() * inv.array();
  }

  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& y) const {
    return (y.array().colwise() * stddev().array()).matrix().colwise() + mean;
  }

  // Scale-only variants (no centring), used for predicted deltas so that a
  // zero network output means "state unchanged".
  Eigen::MatrixXd scale(const Eigen::MatrixXd& x) const {
    return x.array().colwise() * stddev().cwiseInverse().array();
  }

  Eigen::MatrixXd unscale(const Eigen::MatrixXd& y) const {
    return y.array().colwise() * stddev().array();
  }
};

struct EnsembleConfig {
  int members = 5;
  int hidden_width = 64;
  int hidden_layers = 2;
  Activation activation = Activation::kTanh;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  bool bootstrap = true;
};

// Uniform draw from {0, ..., members - 1}.
inline std::size_t sample_member(Rng& rng, std::size_t members) {
  if (members <= 1) return 0;
  std::uniform_int_distribution<std::size_t> dist(0, members - 1);
  return dist(rng);
}

class DynamicsEnsemble {
 public:
  DynamicsEnsemble() = default;

  DynamicsEnsemble(const EnvSpec& spec, const EnsembleConfig& cfg, Rng& rng)
      : spec_(&spec), cfg_(cfg) {
    if (cfg.members < 1) throw DimensionError("ensemble needs at least one member");
    const int in = spec.state_dim + spec.action_dim;
    for (int k = 0; k < cfg.members; ++k) {
      members_.push_back(make_mlp(
          layer_sizes(in, cfg.hidden_width, cfg.hidden_layers, spec.state_dim),
          cfg.activation, rng));
    }
    init_state();
  }

  // Builds an ensemble around given member parameters.
  DynamicsEnsemble(const EnvSpec& spec, const EnsembleConfig& cfg,
                   std::vector<MlpParams> members)
      : spec_(&spec), cfg_(cfg), members_(std::move(members)) {
    if (members_.empty()) throw DimensionError("ensemble needs at least one member");
    cfg_.members = static_cast<int>(members_.size());
    for (const auto& m : members_) {
      m.validate();
      if (m.input_dim() != spec.state_dim + spec.action_dim ||
          m.output_dim() != spec.state_dim) {
        throw DimensionError("ensemble member has wrong input/output size");
      }
    }
    init_state();
  }

  std::size_t size() const { return members_.size(); }
  int state_dim() const { return spec_->state_dim; }
  int action_dim() const { return spec_->action_dim; }
  const EnvSpec& spec() const { return *spec_; }
  const EnsembleConfig& config() const { return cfg_; }

  const std::vector<MlpParams>& members() const { return members_; }
  std::vector<MlpParams>& members() { return members_; }
  const std::vector<OptimizerState>& optimizers() const { return optimizers_; }
  std::vector<OptimizerState>& optimizers() { return optimizers_; }
  const Normalizer& input_normalizer() const { return input_norm_; }
  const Normalizer& output_normalizer() const { return output_norm_; }
  Normalizer& input_normalizer() { return input_norm_; }
  Normalizer& output_normalizer() { return output_norm_; }

  // Feeds real transitions to the normalisers.
  void observe(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
               const Eigen::MatrixXd& next_states) {
    input_norm_.update(stack(states, actions));
    output_norm_.update(state_delta(*spec_, states, next_states));
  }

  // Column-wise prediction by one member. Actions are used as given.
  Eigen::MatrixXd predict_batch(std::size_t member,
                                const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& actions) const {
    check_member(member);
    if (states.rows() != state_dim() || actions.rows() != action_dim() ||
        states.cols() != actions.cols()) {
      throw DimensionError("predict: state/action shapes do not match");
    }
    const Eigen::MatrixXd y = forward_batch(
        members_[member], input_norm_.normalize(stack(states, actions)));
    Eigen::MatrixXd next = states + output_norm_.unscale(y);
    wrap_states(*spec_, next);
    return next;
  }

  Eigen::VectorXd predict(std::size_t member, const Eigen::VectorXd& state,
                          const Eigen::VectorXd& action) const {
    if (!state.allFinite() || !action.allFinite()) {
      throw DimensionError("predict: non-finite input");
    }
    return predict_batch(member, state, action).col(0);
  }

  // One optimiser step for every member on its own bootstrap resample of the
  // batch (or the batch itself when bootstrapping is off). Returns the
  // pre-step MSE in normalised units, averaged over members.
  double train_step(const Eigen::MatrixXd& states,
                    const Eigen::MatrixXd& actions,
                    const Eigen::MatrixXd& next_states, Rng& rng) {
    const Eigen::Index n = states.cols();
    if (n == 0) throw TrainingError("empty model training batch");
    if (actions.cols() != n || next_states.cols() != n) {
      throw DimensionError("model batch columns disagree");
    }
    const Eigen::MatrixXd inputs = input_norm_.normalize(stack(states, actions));
    const Eigen::MatrixXd targets =
        output_norm_.scale(state_delta(*spec_, states, next_states));

    std::vector<GradientBundle> grads;
    grads.reserve(members_.size());
    double total = 0.0;
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (auto& member : members_) {
      Eigen::MatrixXd x = inputs;
      Eigen::MatrixXd y = targets;
      if (cfg_.bootstrap) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const Eigen::Index src = pick(rng);
          x.col(j) = inputs.col(src);
          y.col(j) = targets.col(src);
        }
      }
      ForwardCache cache;
      const Eigen::MatrixXd err = forward_batch(member, x, &cache) - y;
      const double count = static_cast<double>(err.size());
      total += err.squaredNorm() / count;
      grads.push_back(
          backward_batch(member, cache, (2.0 / count) * err).grads);
    }
    const double loss = total / static_cast<double>(members_.size());
    if (!std::isfinite(loss)) throw TrainingError("non-finite model loss");
    for (std::size_t k = 0; k < members_.size(); ++k) {
      optimizer_step(optimizers_[k], members_[k], grads[k]);
    }
    return loss;
  }

  // Mean squared error against given transitions, in normalised units.
  double evaluate_mse(const Eigen::MatrixXd& states,
                      const Eigen::MatrixXd& actions,
                      const Eigen::MatrixXd& next_states) const {
    const Eigen::MatrixXd inputs = input_norm_.normalize(stack(states, actions));
    const Eigen::MatrixXd targets =
        output_norm_.scale(state_delta(*spec_, states, next_states));
    double total = 0.0;
    for (const auto& member : members_) {
      total += (forward_batch(member, inputs) - targets).squaredNorm() /
               static_cast<double>(targets.size());
    }
    return total / static_cast<double>(members_.size());
  }

 private:
  void init_state() {
    const int in = spec_->state_dim + spec_->action_dim;
    input_norm_ = Normalizer(in);
    output_norm_ = Normalizer(spec_->state_dim);
    optimizers_.clear();
    for (const auto& m : members_) {
      optimizers_.push_back(
          OptimizerState::for_params(m, cfg_.optimizer, cfg_.learning_rate));
    }
  }

  void check_member(std::size_t member) const {
    if (member >= members_.size()) {
      throw DimensionError("ensemble member index " + std::to_string(member) +
                           " out of range");
    }
  }

  static Eigen::MatrixXd stack(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
  }

  const EnvSpec* spec_ = nullptr;
  EnsembleConfig cfg_;
  std::vector<MlpParams> members_;
  std::vector<OptimizerState> optimizers_;
  Normalizer input_norm_;
  Normalizer output_norm_;
};

}  // namespace smpc
