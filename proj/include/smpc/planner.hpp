#pragma once

// Model predictive path integral planning with a terminal value.
//
// A plan holds H + 1 controls u_0..u_H. Each round draws N noise sequences
// eps ~ N(0, Sigma), rolls out a_t = clamp(u_t + eps_t) for t < H under the
// model (re-drawing the ensemble member at every step by default), and scores
//
//   J = sum_{t<H} gamma^t cost(s_t, a_t) + gamma^H Q(s_H, a_H).
//
// Importance weights are w = exp(-(J + (lambda/2) sum_{t<=H} u_t' Sigma^-1
// (u_t + 2 eps_t)) / lambda); the plan moves by the weighted mean noise and
// the value estimate is -lambda log(mean w). Weights are evaluated relative
// to the smallest exponent so small temperatures do not underflow.
//
// All randomness of a round is drawn up front (RolloutNoise), so rollouts are
// pure functions of their column and may be evaluated in any order.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "smpc/environments.hpp"
#include "smpc/errors.hpp"
#include "smpc/random.hpp"

namespace smpc {

struct Plan {
  Eigen::MatrixXd controls;  // (action_dim x (H + 1))

  static Plan zeros(int action_dim, int horizon) {
    return Plan{Eigen::MatrixXd::Zero(action_dim, horizon + 1)};
  }

  int horizon() const { return static_cast<int>(controls.cols()) - 1; }
  int action_dim() const { return static_cast<int>(controls.rows()); }
  Eigen::VectorXd first() const { return controls.col(0); }

  bool operator==(const Plan& o) const {
    return controls.rows() == o.controls.rows() &&
           controls.cols() == o.controls.cols() && controls == o.controls;
  }
};

enum class MemberSampling { kPerStep, kPerTrajectory };

struct PlannerConfig {
  double lambda = 1.0;
  Eigen::VectorXd noise_std;  // Sigma = diag(noise_std^2)
  int n_samples = 512;
  int horizon = 8;
  double gamma = 0.99;
  int iterations = 2;
  MemberSampling member_sampling = MemberSampling::kPerStep;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;

  static PlannerConfig for_env(const EnvSpec& spec, double noise_std = 0.3) {
    PlannerConfig c;
    c.noise_std = Eigen::VectorXd::Constant(spec.action_dim, noise_std);
    c.action_low = spec.action_low;
    c.action_high = spec.action_high;
    return c;
  }

  int action_dim() const { return static_cast<int>(noise_std.size()); }

  Eigen::VectorXd inverse_covariance() const {
    return noise_std.array().square().inverse();
  }

  void validate() const {
    if (!(lambda > 0.0)) throw PlannerError("lambda must be positive");
    if (noise_std.size() == 0 || (noise_std.array() <= 0.0).any()) {
      throw PlannerError("noise standard deviations must be positive");
    }
    if (n_samples < 1) throw PlannerError("need at least one sample");
    if (horizon < 1) throw PlannerError("horizon must be at least 1");
    if (!(gamma > 0.0 && gamma < 1.0)) {
      throw PlannerError("gamma must lie in (0, 1)");
    }
    if (iterations < 0) throw PlannerError("iterations must be non-negative");
    if (action_low.size() != noise_std.size() ||
        action_high.size() != noise_std.size() ||
        (action_low.array() > action_high.array()).any()) {
      throw PlannerError("action bounds do not match the action dimension");
    }
  }
};

// Anything the planner can roll out: a (possibly multi-member) one-step
// model, the running cost and a terminal value, all column-batched.
template <typename M>
concept RolloutModel = requires(const M& m, std::size_t member,
                                const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& actions) {
  { m.num_members() } -> std::convertible_to<std::size_t>;
  { m.state_dim() } -> std::convertible_to<int>;
  { m.action_dim() } -> std::convertible_to<int>;
  { m.step(member, states, actions) } -> std::convertible_to<Eigen::MatrixXd>;
  { m.running_cost(states, actions) } -> std::convertible_to<Eigen::VectorXd>;
  { m.terminal_value(states, actions) } -> std::convertible_to<Eigen::VectorXd>;
};

struct RolloutNoise {
  std::vector<Eigen::MatrixXd> eps;  // H + 1 entries of (action_dim x N)
  Eigen::MatrixXi members;           // (H x N) ensemble member per step

  int horizon() const { return static_cast<int>(eps.size()) - 1; }
  Eigen::Index num_samples() const { return eps.empty() ? 0 : eps[0].cols(); }
};

inline RolloutNoise sample_noise(const PlannerConfig& cfg,
                                 std::size_t num_members, Rng& rng) {
  RolloutNoise noise;
  const int du = cfg.action_dim();
  const int n = cfg.n_samples;
  noise.eps.reserve(static_cast<std::size_t>(cfg.horizon) + 1);
  for (int t = 0; t <= cfg.horizon; ++t) {
    Eigen::MatrixXd e = standard_normal(du, n, rng);
    noise.eps.push_back(e.array().colwise() * cfg.noise_std.array());
  }
  noise.members = Eigen::MatrixXi::Zero(cfg.horizon, n);
  if (num_members > 1) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(num_members) - 1);
    if (cfg.member_sampling == MemberSampling::kPerStep) {
      for (int j = 0; j < n; ++j) {
        for (int t = 0; t < cfg.horizon; ++t) noise.members(t, j) = pick(rng);
      }
    } else {
      for (int j = 0; j < n; ++j) noise.members.col(j).setConstant(pick(rng));
    }
  }
  return noise;
}

namespace detail {

inline Eigen::MatrixXd clamped(const Eigen::MatrixXd& a,
                               const PlannerConfig& cfg) {
  return a.cwiseMax(cfg.action_low.replicate(1, a.cols()))
      .cwiseMin(cfg.action_high.replicate(1, a.cols()));
}

inline void check_plan(const Plan& p, const PlannerConfig& cfg) {
  if (p.horizon() != cfg.horizon || p.action_dim() != cfg.action_dim()) {
    throw DimensionError("plan must hold H + 1 = " +
                         std::to_string(cfg.horizon + 1) + " controls of size " +
                         std::to_string(cfg.action_dim()));
  }
}

inline void check_noise(const RolloutNoise& noise, const Plan& p) {
  if (noise.horizon() != p.horizon() || noise.members.rows() != p.horizon() ||
      noise.members.cols() != noise.num_samples()) {
    throw DimensionError("noise does not match the plan horizon");
  }
  for (const auto& e : noise.eps) {
    if (e.rows() != p.action_dim() || e.cols() != noise.num_samples()) {
      throw DimensionError("noise blocks must be (action_dim x N)");
    }
  }
}

template <RolloutModel M>
Eigen::MatrixXd branch_step(const M& model, const Eigen::MatrixXd& states,
                            const Eigen::MatrixXd& actions,
                            const Eigen::MatrixXi& members, int t) {
  const std::size_t k_total = model.num_members();
  if (k_total == 1) return model.step(0, states, actions);
  Eigen::MatrixXd next(states.rows(), states.cols());
  std::vector<std::vector<Eigen::Index>> groups(k_total);
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const int k = members(t, j);
    if (k < 0 || static_cast<std::size_t>(k) >= k_total) {
      throw DimensionError("member index out of range in rollout noise");
    }
    groups[static_cast<std::size_t>(k)].push_back(j);
  }
  for (std::size_t k = 0; k < k_total; ++k) {
    if (groups[k].empty()) continue;
    next(Eigen::all, groups[k]) =
        model.step(k, states(Eigen::all, groups[k]), actions(Eigen::all, groups[k]));
  }
  return next;
}

}  // namespace detail

namespace detail {

// Rolls out every column: a_t = clamp(nominal_t + eps_t) from starts.col(j).
template <RolloutModel M>
Eigen::VectorXd rollout_columns(const Eigen::MatrixXd& starts,
                                const std::vector<Eigen::MatrixXd>& nominal,
                                const RolloutNoise& noise, const M& model,
                                const PlannerConfig& cfg) {
  const Eigen::Index n = starts.cols();
  const int horizon = noise.horizon();
  Eigen::MatrixXd states = starts;
  Eigen::VectorXd costs = Eigen::VectorXd::Zero(n);
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::MatrixXd actions = clamped(nominal[t] + noise.eps[t], cfg);
    costs += discount * model.running_cost(states, actions);
    states = branch_step(model, states, actions, noise.members, t);
    discount *= cfg.gamma;
  }
  const Eigen::MatrixXd terminal_actions =
      clamped(nominal[horizon] + noise.eps[horizon], cfg);
  costs += discount * model.terminal_value(states, terminal_actions);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!std::isfinite(costs[j]) || !states.col(j).allFinite()) {
      costs[j] = std::numeric_limits<double>::infinity();
    }
  }
  return costs;
}

}  // namespace detail

// Discounted cost of each noisy rollout; samples whose state or cost becomes
// non-finite get +infinity.
template <RolloutModel M>
Eigen::VectorXd rollout_costs(const Eigen::VectorXd& s0, const Plan& p,
                              const RolloutNoise& noise, const M& model,
                              const PlannerConfig& cfg) {
  detail::check_plan(p, cfg);
  detail::check_noise(noise, p);
  if (s0.size() != model.state_dim()) {
    throw DimensionError("initial state has the wrong size");
  }
  const Eigen::Index n = noise.num_samples();
  std::vector<Eigen::MatrixXd> nominal;
  for (int t = 0; t <= p.horizon(); ++t) {
    nominal.push_back(p.controls.col(t).replicate(1, n));
  }
  return detail::rollout_columns(s0.replicate(1, n), nominal, noise, model, cfg);
}

struct ImportanceWeights {
  Eigen::VectorXd exponent;  // J + control-effort term; +inf for failures
  Eigen::VectorXd weights;   // exp(-(exponent - shift) / lambda)
  double shift = 0.0;        // smallest finite exponent
  double eta = 0.0;          // mean of the shifted weights
  double lambda = 1.0;

  Eigen::VectorXd normalized() const { return weights / weights.sum(); }

  // -lambda log(mean exp(-exponent / lambda)), reconstructed from the
  // shifted weights.
  double value() const { return shift - lambda * std::log(eta); }

  double effective_sample_size() const {
    const double s = weights.sum();
    return s * s / weights.squaredNorm();
  }
};

inline ImportanceWeights compute_weights(const Eigen::VectorXd& costs,
                                         const Plan& p,
                                         const RolloutNoise& noise,
                                         const PlannerConfig& cfg) {
  detail::check_noise(noise, p);
  const Eigen::Index n = costs.size();
  if (n != noise.num_samples()) {
    throw DimensionError("costs and noise disagree on sample count");
  }
  const Eigen::VectorXd sigma_inv = cfg.inverse_covariance();
  ImportanceWeights w;
  w.lambda = cfg.lambda;
  w.exponent = costs;
  for (int t = 0; t <= p.horizon(); ++t) {
    const Eigen::VectorXd su = sigma_inv.cwiseProduct(p.controls.col(t));
    // u' S^-1 (u + 2 eps) = u' S^-1 u + 2 (S^-1 u)' eps
    const double quad = su.dot(p.controls.col(t));
    w.exponent.array() +=
        0.5 * cfg.lambda *
        (quad + 2.0 * (su.transpose() * noise.eps[t]).array().transpose());
  }
  double shift = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(w.exponent[j])) shift = std::min(shift, w.exponent[j]);
  }
  if (!std::isfinite(shift)) {
    throw PlannerError("every rollout failed: all importance weights are zero");
  }
  w.shift = shift;
  w.weights.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    w.weights[j] = std::isfinite(w.exponent[j])
                       ? std::exp(-(w.exponent[j] - shift) / cfg.lambda)
                       : 0.0;
  }
  w.eta = w.weights.mean();
  return w;
}

// u_t <- clamp(u_t + sum_n w_n eps_t^n / (eta N)).
inline Plan update_controls(const Plan& p, const RolloutNoise& noise,
                            const ImportanceWeights& w,
                            const PlannerConfig& cfg) {
  detail::check_noise(noise, p);
  if (!(w.eta > 0.0) || !std::isfinite(w.eta)) {
    throw PlannerError("normalising constant eta must be positive");
  }
  const Eigen::VectorXd normalized =
      w.weights / (w.eta * static_cast<double>(w.weights.size()));
  Plan out = p;
  for (int t = 0; t <= p.horizon(); ++t) {
    out.controls.col(t) += noise.eps[t] * normalized;
  }
  out.controls = detail::clamped(out.controls, cfg);
  return out;
}

struct PlanDiagnostics {
  double effective_sample_size = 0.0;
  double min_cost = 0.0;
  double mean_cost = 0.0;
};

struct PlanResult {
  Plan plan;
  double v_mppi = 0.0;
  PlanDiagnostics diagnostics;
};

namespace detail {

inline PlanDiagnostics diagnose(const Eigen::VectorXd& costs,
                                const ImportanceWeights& w) {
  PlanDiagnostics d;
  d.effective_sample_size = w.effective_sample_size();
  double sum = 0.0;
  Eigen::Index finite = 0;
  d.min_cost = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < costs.size(); ++j) {
    if (!std::isfinite(costs[j])) continue;
    sum += costs[j];
    ++finite;
    d.min_cost = std::min(d.min_cost, costs[j]);
  }
  d.mean_cost = finite > 0 ? sum / static_cast<double>(finite)
                           : std::numeric_limits<double>::infinity();
  return d;
}

}  // namespace detail

// Refines one plan per column of `starts` (all with the same config). The
// rollouts of every problem in a round are evaluated as one batch; noise is
// drawn problem by problem, so a batch of one consumes the stream exactly
// like plan().
template <RolloutModel M>
std::vector<PlanResult> plan_batch(const Eigen::MatrixXd& starts,
                                   const std::vector<Plan>& warm, const M& model,
                                   const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t problems = warm.size();
  if (static_cast<std::size_t>(starts.cols()) != problems) {
    throw DimensionError("one warm plan is needed per start state");
  }
  if (starts.rows() != model.state_dim()) {
    throw DimensionError("initial state has the wrong size");
  }
  if (model.action_dim() != cfg.action_dim()) {
    throw DimensionError("model and planner disagree on action size");
  }
  for (const auto& w : warm) detail::check_plan(w, cfg);

  std::vector<PlanResult> results(problems);
  for (std::size_t b = 0; b < problems; ++b) results[b].plan = warm[b];
  if (problems == 0) return results;

  const Eigen::Index n = cfg.n_samples;
  const Eigen::Index total = n * static_cast<Eigen::Index>(problems);
  const int du = cfg.action_dim();
  const int rounds = std::max(cfg.iterations, 1);
  std::vector<RolloutNoise> noises(problems);
  for (int round = 0; round < rounds; ++round) {
    RolloutNoise stacked;
    stacked.eps.assign(static_cast<std::size_t>(cfg.horizon) + 1,
                       Eigen::MatrixXd(du, total));
    stacked.members.resize(cfg.horizon, total);
    std::vector<Eigen::MatrixXd> nominal(stacked.eps.size(),
                                         Eigen::MatrixXd(du, total));
    Eigen::MatrixXd origins(starts.rows(), total);
    for (std::size_t b = 0; b < problems; ++b) {
      noises[b] = sample_noise(cfg, model.num_members(), rng);
      const Eigen::Index off = n * static_cast<Eigen::Index>(b);
      for (int t = 0; t <= cfg.horizon; ++t) {
        stacked.eps[t].middleCols(off, n) = noises[b].eps[t];
        nominal[t].middleCols(off, n) =
            results[b].plan.controls.col(t).replicate(1, n);
      }
      stacked.members.middleCols(off, n) = noises[b].members;
      origins.middleCols(off, n) = starts.col(static_cast<Eigen::Index>(b)).replicate(1, n);
    }
    const Eigen::VectorXd costs =
        detail::rollout_columns(origins, nominal, stacked, model, cfg);
    for (std::size_t b = 0; b < problems; ++b) {
      const Eigen::VectorXd mine =
          costs.segment(n * static_cast<Eigen::Index>(b), n);
      const ImportanceWeights w =
          compute_weights(mine, results[b].plan, noises[b], cfg);
      results[b].v_mppi = w.value();
      results[b].diagnostics = detail::diagnose(mine, w);
      if (cfg.iterations > 0) {
        results[b].plan = update_controls(results[b].plan, noises[b], w, cfg);
      }
    }
  }
  return results;
}

// Runs cfg.iterations refinement rounds starting from `warm`. The value is
// taken from the final round's weights. With zero iterations the plan is
// returned unchanged and the value comes from one weighting of it.
template <RolloutModel M>
PlanResult plan(const Eigen::VectorXd& s0, const Plan& warm, const M& model,
                const PlannerConfig& cfg, Rng& rng) {
  if (s0.size() != model.state_dim()) {
    throw DimensionError("initial state has the wrong size");
  }
  return std::move(plan_batch(s0, {warm}, model, cfg, rng).front());
}

// Receding-horizon shift: drop u_0 and append a zero control.
inline Plan shift_plan(const Plan& p) {
  Plan out = Plan::zeros(p.action_dim(), p.horizon());
  const Eigen::Index h = p.controls.cols();
  out.controls.leftCols(h - 1) = p.controls.rightCols(h - 1);
  return out;
}

}  // namespace smpc
