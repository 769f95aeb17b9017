#pragma once

// Deterministic desk-scale control tasks.
//
//   double-integrator  state (position, velocity), force in [-1, 1]
//                      exact zero-order-hold discretisation, dt = 0.05
//                      cost s'Qs + a'Ra with Q = I, R = 0.1 I
//   pendulum           state (angle, angular velocity), angle 0 is upright
//                      torque in [-2, 2], semi-implicit Euler, dt = 0.05
//                      cost angle^2 + 0.1 velocity^2 + 0.001 torque^2
//
// Batched functions operate on column-stacked states/actions so planners can
// step many rollouts at once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "smpc/errors.hpp"
#include "smpc/random.hpp"

namespace smpc {

enum class EnvId { kDoubleIntegrator, kPendulum };

inline std::string_view env_name(EnvId id) {
  return id == EnvId::kDoubleIntegrator ? "double-integrator" : "pendulum";
}

inline EnvId parse_env_id(std::string_view name) {
  if (name == "double-integrator") return EnvId::kDoubleIntegrator;
  if (name == "pendulum") return EnvId::kPendulum;
  throw EnvironmentError("unknown env-id '" + std::string(name) + "'");
}

struct EnvSpec {
  EnvId id;
  int state_dim;
  int action_dim;
  double dt;
  int episode_horizon;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  Eigen::VectorXd state_scale;   // typical magnitude, used for input scaling
  std::vector<bool> angular;     // dimensions wrapped to [-pi, pi]
  double value_scale;            // typical magnitude of discounted values
};

namespace pendulum_constants {
inline constexpr double kGravity = 10.0;
inline constexpr double kMass = 1.0;
inline constexpr double kLength = 1.0;
inline constexpr double kMaxSpeed = 8.0;
inline constexpr double kMaxTorque = 2.0;
}  // namespace pendulum_constants

inline const EnvSpec& env_spec(EnvId id) {
  static const EnvSpec kDoubleIntegrator = [] {
    EnvSpec s{EnvId::kDoubleIntegrator, 2, 1, 0.05, 200,
              Eigen::VectorXd::Constant(1, -1.0),
              Eigen::VectorXd::Constant(1, 1.0),
              Eigen::Vector2d(1.0, 1.0), {false, false}, 10.0};
    return s;
  }();
  static const EnvSpec kPendulum = [] {
    using namespace pendulum_constants;
    EnvSpec s{EnvId::kPendulum, 2, 1, 0.05, 200,
              Eigen::VectorXd::Constant(1, -kMaxTorque),
              Eigen::VectorXd::Constant(1, kMaxTorque),
              Eigen::Vector2d(std::numbers::pi, kMaxSpeed), {true, false},
              100.0};
    return s;
  }();
  return id == EnvId::kDoubleIntegrator ? kDoubleIntegrator : kPendulum;
}

inline double wrap_angle(double x) {
  constexpr double kPi = std::numbers::pi;
  if (x >= -kPi && x < kPi) return x;
  double y = std::fmod(x + kPi, 2.0 * kPi);
  if (y < 0.0) y += 2.0 * kPi;
  return y - kPi;
}

// Wraps the angular rows of column-stacked states in place.
inline void wrap_states(const EnvSpec& spec, Eigen::MatrixXd& states) {
  for (int i = 0; i < spec.state_dim; ++i) {
    if (!spec.angular[i]) continue;
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      states(i, j) = wrap_angle(states(i, j));
    }
  }
}

// s_next - s with angular components taken on the circle.
inline Eigen::MatrixXd state_delta(const EnvSpec& spec,
                                   const Eigen::MatrixXd& s,
                                   const Eigen::MatrixXd& s_next) {
  Eigen::MatrixXd d = s_next - s;
  wrap_states(spec, d);
  return d;
}

inline Eigen::MatrixXd clamp_actions(const EnvSpec& spec,
                                     const Eigen::MatrixXd& a) {
  return a.cwiseMax(spec.action_low.replicate(1, a.cols()))
      .cwiseMin(spec.action_high.replicate(1, a.cols()));
}

// Exact discrete double-integrator matrices and cost weights.
struct LinearQuadratic {
  Eigen::MatrixXd A, B, Q, R;
};

inline LinearQuadratic double_integrator_lq() {
  const double dt = env_spec(EnvId::kDoubleIntegrator).dt;
  LinearQuadratic lq;
  lq.A = (Eigen::Matrix2d() << 1.0, dt, 0.0, 1.0).finished();
  lq.B = (Eigen::Vector2d() << 0.5 * dt * dt, dt).finished();
  lq.Q = Eigen::Matrix2d::Identity();
  lq.R = Eigen::MatrixXd::Constant(1, 1, 0.1);
  return lq;
}

// Running cost of (already clamped) actions, one entry per column.
inline Eigen::VectorXd cost_batch(EnvId id, const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions) {
  Eigen::VectorXd c(states.cols());
  if (id == EnvId::kDoubleIntegrator) {
    c = states.colwise().squaredNorm().transpose() +
        0.1 * actions.colwise().squaredNorm().transpose();
    return c;
  }
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const double th = wrap_angle(states(0, j));
    const double w = states(1, j);
    const double u = actions(0, j);
    c[j] = th * th + 0.1 * w * w + 0.001 * u * u;
  }
  return c;
}

// One deterministic transition per column; actions are clamped first.
inline Eigen::MatrixXd dynamics_batch(EnvId id, const Eigen::MatrixXd& states,
                                      const Eigen::MatrixXd& actions) {
  const EnvSpec& spec = env_spec(id);
  const Eigen::MatrixXd a = clamp_actions(spec, actions);
  if (id == EnvId::kDoubleIntegrator) {
    static const LinearQuadratic lq = double_integrator_lq();
    return lq.A * states + lq.B * a;
  }
  using namespace pendulum_constants;
  Eigen::MatrixXd next(2, states.cols());
  const double dt = spec.dt;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const double th = states(0, j);
    double w = states(1, j);
    const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(th) +
                         3.0 / (kMass * kLength * kLength) * a(0, j);
    w = std::clamp(w + accel * dt, -kMaxSpeed, kMaxSpeed);
    next(0, j) = wrap_angle(th + w * dt);
    next(1, j) = w;
  }
  return next;
}

inline double cost(EnvId id, const Eigen::VectorXd& s,
                   const Eigen::VectorXd& a) {
  return cost_batch(id, s, clamp_actions(env_spec(id), a))[0];
}

struct EnvState {
  Eigen::VectorXd state;
  int step = 0;
};

struct StepResult {
  EnvState next;
  double cost = 0.0;
  bool done = false;      // episode over (time limit or failure)
  bool terminal = false;  // absorbing state: no value beyond this step
};

// Initial state: double integrator position/velocity ~ U[-1, 1];
// pendulum angle ~ U[-pi, pi], velocity ~ U[-1, 1].
inline EnvState env_reset(EnvId id, std::uint64_t seed) {
  Rng rng(seed);
  EnvState s;
  s.state.resize(2);
  if (id == EnvId::kDoubleIntegrator) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    s.state[0] = u(rng);
    s.state[1] = u(rng);
  } else {
    std::uniform_real_distribution<double> angle(-std::numbers::pi,
                                                 std::numbers::pi);
    std::uniform_real_distribution<double> vel(-1.0, 1.0);
    s.state[0] = angle(rng);
    s.state[1] = vel(rng);
  }
  return s;
}

inline EnvState env_reset(std::string_view id, std::uint64_t seed) {
  return env_reset(parse_env_id(id), seed);
}

inline StepResult env_step(EnvId id, const EnvState& state,
                           const Eigen::VectorXd& action) {
  const EnvSpec& spec = env_spec(id);
  if (action.size() != spec.action_dim) {
    throw DimensionError("action has size " + std::to_string(action.size()) +
                         ", expected " + std::to_string(spec.action_dim));
  }
  if (state.state.size() != spec.state_dim) {
    throw DimensionError("state has wrong size");
  }
  if (!action.allFinite()) throw EnvironmentError("non-finite action");
  const Eigen::MatrixXd a = clamp_actions(spec, action);
  StepResult r;
  r.cost = cost_batch(id, state.state, a)[0];
  r.next.state = dynamics_batch(id, state.state, a).col(0);
  r.next.step = state.step + 1;
  r.done = r.next.step >= spec.episode_horizon;
  r.terminal = false;
  return r;
}

}  // namespace smpc
