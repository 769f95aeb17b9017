#pragma once

// Fixed-seed evaluation: the planner-driven agent (no learning), a uniform
// random policy and, on the double integrator, the Riccati controller. All
// three see the same initial states for a given seed.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "smpc/config.hpp"
#include "smpc/environments.hpp"
#include "smpc/lqr.hpp"
#include "smpc/trainer.hpp"

namespace smpc {

struct ReturnStats {
  std::vector<double> returns;  // negative episode cost
  double mean = 0.0;
  double median = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline ReturnStats summarize_returns(std::vector<double> returns) {
  ReturnStats s;
  s.returns = std::move(returns);
  if (!s.returns.empty()) {
    s.mean = std::accumulate(s.returns.begin(), s.returns.end(), 0.0) /
             static_cast<double>(s.returns.size());
  }
  s.median = median_of(s.returns);
  return s;
}

inline std::vector<std::uint64_t> evaluation_episode_seeds(std::uint64_t seed, int episodes) {
  Rng rng = make_stream(seed, streams::kEvaluation);
  std::vector<std::uint64_t> out(static_cast<std::size_t>(episodes));
  for (auto& s : out) s = rng();
  return out;
}

// Full-length episodes of a feedback policy from the evaluation starts.
// `policy(state, episode_step)` returns the action.
inline ReturnStats rollout_policy(
    EnvId env, int episodes, std::uint64_t seed,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)>& policy,
    const std::function<void()>& on_episode_start = {}) {
  std::vector<double> returns;
  for (std::uint64_t episode_seed : evaluation_episode_seeds(seed, episodes)) {
    EnvState s = env_reset(env, episode_seed);
    if (on_episode_start) on_episode_start();
    double cost = 0.0;
    for (;;) {
      const StepResult r = env_step(env, s, policy(s.state, s.step));
      cost += r.cost;
      s = r.next;
      if (r.done) break;
    }
    returns.push_back(-cost);
  }
  return summarize_returns(std::move(returns));
}

// Planner-based control with the configured exploration noise, no learning.
inline ReturnStats evaluate_agent(const TrainConfig& cfg, const DynamicsEnsemble& ensemble,
                                  const SoftQFunction& q, int episodes, std::uint64_t seed) {
  Rng rng = make_stream(seed, streams::kEvaluationPlanner);
  Plan warm = Plan::zeros(env_spec(cfg.env).action_dim, cfg.horizon);
  return rollout_policy(
      cfg.env, episodes, seed,
      [&](const Eigen::VectorXd& s, int) {
        const PlanResult r = agent_control(cfg, ensemble, q, s, warm, rng);
        const Eigen::VectorXd a = r.plan.first();
        warm = shift_plan(r.plan);
        return a;
      },
      [&] { warm = Plan::zeros(env_spec(cfg.env).action_dim, cfg.horizon); });
}

inline ReturnStats random_policy_returns(EnvId env, int episodes, std::uint64_t seed) {
  Rng rng = make_stream(seed, streams::kBaseline);
  const EnvSpec& spec = env_spec(env);
  return rollout_policy(env, episodes, seed, [&](const Eigen::VectorXd&, int) {
    return uniform_vector(spec.action_low, spec.action_high, rng);
  });
}

// u = -K s from the discounted Riccati solution of the double integrator,
// clamped by the environment like any other action.
inline ReturnStats lqr_returns(int episodes, std::uint64_t seed, double gamma) {
  const LinearQuadratic lq = double_integrator_lq();
  const LqrSolution sol = solve_lqr(lq.A, lq.B, lq.Q, lq.R, gamma);
  return rollout_policy(EnvId::kDoubleIntegrator, episodes, seed,
                        [&](const Eigen::VectorXd& s, int) -> Eigen::VectorXd {
                          return -sol.K * s;
                        });
}

}  // namespace smpc
