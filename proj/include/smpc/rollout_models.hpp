#pragma once

// Rollout models for the planner: the learned ensemble with a soft-Q
// terminal, and the true environment dynamics with an arbitrary terminal.

#include <cstddef>
#include <utility>

#include <Eigen/Core>

#include "smpc/ensemble.hpp"
#include "smpc/environments.hpp"
#include "smpc/planner.hpp"
#include "smpc/soft_q.hpp"

namespace smpc {

struct ZeroTerminal {
  Eigen::VectorXd operator()(const Eigen::MatrixXd& states,
                             const Eigen::MatrixXd&) const {
    return Eigen::VectorXd::Zero(states.cols());
  }
};

// Known environment dynamics and cost as a one-member "ensemble".
template <typename Terminal = ZeroTerminal>
class ExactModel {
 public:
  explicit ExactModel(EnvId env, Terminal terminal = Terminal{})
      : env_(env), terminal_(std::move(terminal)) {}

  std::size_t num_members() const { return 1; }
  int state_dim() const { return env_spec(env_).state_dim; }
  int action_dim() const { return env_spec(env_).action_dim; }

  Eigen::MatrixXd step(std::size_t, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& actions) const {
    return dynamics_batch(env_, states, actions);
  }
  Eigen::VectorXd running_cost(const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& actions) const {
    return cost_batch(env_, states, actions);
  }
  Eigen::VectorXd terminal_value(const Eigen::MatrixXd& states,
                                 const Eigen::MatrixXd& actions) const {
    return terminal_(states, actions);
  }

 private:
  EnvId env_;
  Terminal terminal_;
};

// Learned ensemble dynamics, known running cost, learned terminal Q. A null
// Q gives a zero terminal (finite-horizon planning).
class LearnedModel {
 public:
  LearnedModel(EnvId env, const DynamicsEnsemble& ensemble,
               const SoftQFunction* q, bool use_target_q)
      : env_(env), ensemble_(&ensemble), q_(q), use_target_(use_target_q) {}

  std::size_t num_members() const { return ensemble_->size(); }
  int state_dim() const { return ensemble_->state_dim(); }
  int action_dim() const { return ensemble_->action_dim(); }

  Eigen::MatrixXd step(std::size_t member, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& actions) const {
    return ensemble_->predict_batch(member, states, actions);
  }
  Eigen::VectorXd running_cost(const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& actions) const {
    return cost_batch(env_, states, actions);
  }
  Eigen::VectorXd terminal_value(const Eigen::MatrixXd& states,
                                 const Eigen::MatrixXd& actions) const {
    if (!q_) return Eigen::VectorXd::Zero(states.cols());
    return q_->values(states, actions, use_target_);
  }

 private:
  EnvId env_;
  const DynamicsEnsemble* ensemble_;
  const SoftQFunction* q_;
  bool use_target_;
};

static_assert(RolloutModel<ExactModel<>>);
static_assert(RolloutModel<LearnedModel>);

}  // namespace smpc
