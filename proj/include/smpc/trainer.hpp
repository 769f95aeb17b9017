#pragma once

// Online learning loop: plan at the current state, act, store the transition
// with its shifted plan, then run update cycles that refine stored plans at
// s', fit Q to the planner values and train the dynamics ensemble.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smpc/config.hpp"
#include "smpc/ensemble.hpp"
#include "smpc/environments.hpp"
#include "smpc/errors.hpp"
#include "smpc/planner.hpp"
#include "smpc/random.hpp"
#include "smpc/replay_buffer.hpp"
#include "smpc/rollout_models.hpp"
#include "smpc/soft_q.hpp"

namespace smpc {

// Sub-streams of the run seed. Each consumer owns one.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kEpisodes = 2;
inline constexpr std::uint64_t kWarmup = 3;
inline constexpr std::uint64_t kOnline = 4;
inline constexpr std::uint64_t kTarget = 5;
inline constexpr std::uint64_t kBuffer = 6;
inline constexpr std::uint64_t kModel = 7;
inline constexpr std::uint64_t kEvaluation = 101;
inline constexpr std::uint64_t kEvaluationPlanner = 102;
inline constexpr std::uint64_t kBaseline = 103;
}  // namespace streams

struct MetricsRecord {
  long env_step = 0;
  long episodes = 0;
  double episode_return = std::numeric_limits<double>::quiet_NaN();  // window mean
  double q_loss = std::numeric_limits<double>::quiet_NaN();
  double model_mse = std::numeric_limits<double>::quiet_NaN();
  double v_mppi_mean = std::numeric_limits<double>::quiet_NaN();
  double ess = std::numeric_limits<double>::quiet_NaN();
  double min_cost = std::numeric_limits<double>::quiet_NaN();
  double mean_cost = std::numeric_limits<double>::quiet_NaN();
  double mean_refinements = 0.0;
  // wall clock, excluded from reproducibility comparisons
  double sps = 0.0;
  double wall_seconds = 0.0;
};

namespace metrics_detail {
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace metrics_detail

inline std::string metrics_csv_header() {
  return "env_step,episodes,episode_return,q_loss,model_mse,v_mppi_mean,ess,"
         "min_cost,mean_cost,mean_refinements,sps,wall_seconds";
}

// Number of trailing CSV columns that depend on wall-clock time.
inline constexpr int kWallClockColumns = 2;

inline std::string metrics_csv_row(const MetricsRecord& r) {
  using metrics_detail::num;
  return std::to_string(r.env_step) + "," + std::to_string(r.episodes) + "," +
         num(r.episode_return) + "," + num(r.q_loss) + "," + num(r.model_mse) + "," +
         num(r.v_mppi_mean) + "," + num(r.ess) + "," + num(r.min_cost) + "," +
         num(r.mean_cost) + "," + num(r.mean_refinements) + "," + num(r.sps) + "," +
         num(r.wall_seconds);
}

// The row without its wall-clock columns.
inline std::string strip_wall_clock(const std::string& row) {
  std::string out = row;
  for (int i = 0; i < kWallClockColumns; ++i) {
    const auto comma = out.rfind(',');
    if (comma == std::string::npos) break;
    out.erase(comma);
  }
  return out;
}

// Action from the learned Q alone: a softmin over perturbations of the warm
// first action, weighted like one planner round without any rollout. Used
// when the planner is reserved for value targets.
inline PlanResult q_softmin_action(const SoftQFunction& q, const Eigen::VectorXd& s,
                                   const Plan& warm, const PlannerConfig& cfg, Rng& rng) {
  const int n = cfg.n_samples;
  const int du = cfg.action_dim();
  const Eigen::VectorXd u0 = warm.first();
  const Eigen::MatrixXd eps =
      (standard_normal(du, n, rng).array().colwise() * cfg.noise_std.array()).matrix();
  const Eigen::MatrixXd actions = detail::clamped(u0.replicate(1, n) + eps, cfg);
  Eigen::VectorXd exponent = q.values(s.replicate(1, n), actions);
  const Eigen::VectorXd inv = cfg.inverse_covariance();
  for (int j = 0; j < n; ++j) {
    exponent[j] +=
        0.5 * cfg.lambda * u0.dot(inv.cwiseProduct(u0 + 2.0 * eps.col(j)));
  }
  const double shift = exponent.minCoeff();
  if (!std::isfinite(shift)) throw PlannerError("non-finite Q values in softmin policy");
  const Eigen::VectorXd w = (-(exponent.array() - shift) / cfg.lambda).exp().matrix();
  PlanResult r;
  r.plan = warm;
  r.plan.controls.col(0) = actions * w / w.sum();
  r.v_mppi = shift - cfg.lambda * std::log(w.mean());
  r.diagnostics.effective_sample_size = w.sum() * w.sum() / w.squaredNorm();
  r.diagnostics.min_cost = exponent.minCoeff();
  r.diagnostics.mean_cost = exponent.mean();
  return r;
}

// One control decision of an agent (no learning).
inline PlanResult agent_control(const TrainConfig& cfg, const DynamicsEnsemble& ensemble,
                                const SoftQFunction& q, const Eigen::VectorXd& s,
                                const Plan& warm, Rng& rng) {
  const PlannerConfig pc = cfg.online_planner();
  if (!cfg.ablation.planner_for_control) return q_softmin_action(q, s, warm, pc, rng);
  const LearnedModel model(cfg.env, ensemble, cfg.ablation.terminal_q ? &q : nullptr, false);
  return plan(s, warm, model, pc, rng);
}

// Named ablation arms.
inline std::vector<std::string> ablation_arms() {
  return {"full",          "no-terminal-q", "single-model", "cold-start",
          "cold-5",        "control-only",  "targets-only"};
}

inline void apply_arm(TrainConfig& cfg, const std::string& arm) {
  if (arm == "full") return;
  if (arm == "no-terminal-q") {
    cfg.ablation.terminal_q = false;
  } else if (arm == "single-model") {
    cfg.ablation.ensemble_size = 1;
  } else if (arm == "cold-start") {
    cfg.ablation.warm_start = false;
  } else if (arm == "cold-5") {
    cfg.ablation.warm_start = false;
    cfg.target_iterations = 5;
  } else if (arm == "control-only") {
    cfg.ablation.planner_for_targets = false;
  } else if (arm == "targets-only") {
    cfg.ablation.planner_for_control = false;
  } else {
    throw ConfigError("arm", "unknown ablation arm '" + arm + "'");
  }
}

// Requirements between ablation switches, on top of validate().
inline void validate_training(const TrainConfig& cfg) {
  validate(cfg);
  if (!cfg.ablation.planner_for_control && !cfg.ablation.terminal_q) {
    throw ConfigError("ablation.planner_for_control",
                      "acting from Q alone needs ablation.terminal_q");
  }
  if (!cfg.ablation.planner_for_control && !cfg.ablation.planner_for_targets) {
    throw ConfigError("ablation.planner_for_targets",
                      "at least one of planner_for_control / planner_for_targets must be on");
  }
}

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        spec_(&env_spec(cfg.env)),
        episode_rng_(make_stream(cfg.seed, streams::kEpisodes)),
        warmup_rng_(make_stream(cfg.seed, streams::kWarmup)),
        online_rng_(make_stream(cfg.seed, streams::kOnline)),
        target_rng_(make_stream(cfg.seed, streams::kTarget)),
        buffer_rng_(make_stream(cfg.seed, streams::kBuffer)),
        model_rng_(make_stream(cfg.seed, streams::kModel)),
        buffer_(cfg.buffer_capacity) {
    validate_training(cfg_);
    target_cfg_ = cfg_.target_planner();
    Rng init = make_stream(cfg_.seed, streams::kInit);
    ensemble_ = DynamicsEnsemble(*spec_, cfg_.ensemble_config(), init);
    q_ = SoftQFunction::for_env(*spec_, cfg_.q, init);
    begin_episode();
    window_start_ = Clock::now();
    run_start_ = window_start_;
  }

  const TrainConfig& config() const { return cfg_; }
  long env_step() const { return env_step_; }
  long update_count() const { return updates_; }
  const DynamicsEnsemble& ensemble() const { return ensemble_; }
  const SoftQFunction& q() const { return q_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<double>& episode_returns() const { return returns_; }
  bool done() const { return env_step_ >= cfg_.steps; }
  bool learning() const { return env_step_ >= cfg_.warmup_steps; }

  // Mean return of the last `count` completed episodes.
  double final_return(std::size_t count = 10) const {
    if (returns_.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = std::min(count, returns_.size());
    double sum = 0.0;
    for (std::size_t i = returns_.size() - k; i < returns_.size(); ++i) sum += returns_[i];
    return sum / static_cast<double>(k);
  }

  // One environment step followed by the update cycles. Returns a metrics
  // record when the step closes a metrics window.
  std::optional<MetricsRecord> step() {
    const Eigen::VectorXd s = env_.state;
    const bool learn = learning();
    Eigen::VectorXd a;
    if (!learn) {
      a = uniform_vector(spec_->action_low, spec_->action_high, warmup_rng_);
    } else {
      const PlanResult r = agent_control(cfg_, ensemble_, q_, s, plan_, online_rng_);
      plan_ = r.plan;
      a = plan_.first();
      record_online(r);
    }

    const StepResult out = smpc::env_step(cfg_.env, env_, a);
    episode_cost_ += out.cost;

    Transition t;
    t.state = s;
    t.action = a;
    t.cost = out.cost;
    t.next_state = out.next.state;
    t.done = out.terminal;  // time limits are not absorbing
    plan_ = shift_plan(plan_);
    t.plan = plan_;
    buffer_.push(std::move(t));
    ensemble_.observe(s, a, out.next.state);

    env_ = out.next;
    ++env_step_;
    if (out.done) {
      returns_.push_back(-episode_cost_);
      window_returns_.push_back(-episode_cost_);
      begin_episode();
    }

    if (learn && buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
      for (int u = 0; u < cfg_.updates_per_step; ++u) update_cycle();
    }

    if (env_step_ % cfg_.metrics_every == 0 || done()) return close_window();
    return std::nullopt;
  }

  // Runs to cfg.steps, handing each metrics record to `sink`.
  void run(const std::function<void(const MetricsRecord&)>& sink = {}) {
    while (!done()) {
      auto rec = step();
      if (rec && sink) sink(*rec);
    }
  }

 private:
  using Clock = std::chrono::steady_clock;

  void begin_episode() {
    env_ = env_reset(cfg_.env, episode_rng_());
    plan_ = Plan::zeros(spec_->action_dim, cfg_.horizon);
    episode_cost_ = 0.0;
  }

  void record_online(const PlanResult& r) {
    ess_sum_ += r.diagnostics.effective_sample_size;
    min_cost_sum_ += r.diagnostics.min_cost;
    mean_cost_sum_ += r.diagnostics.mean_cost;
    online_v_sum_ += r.v_mppi;
    ++online_calls_;
  }

  void update_cycle() {
    const std::size_t b = static_cast<std::size_t>(cfg_.batch_size);
    std::vector<Transition> batch;
    if (cfg_.ablation.warm_start) {
      batch = buffer_.sample_remove(b, buffer_rng_);
    } else {
      batch = buffer_.sample_copy(b, buffer_rng_);
      for (auto& t : batch) t.plan = Plan::zeros(spec_->action_dim, cfg_.horizon);
    }

    const Eigen::Index n = static_cast<Eigen::Index>(b);
    Eigen::MatrixXd states(spec_->state_dim, n), actions(spec_->action_dim, n),
        next(spec_->state_dim, n);
    Eigen::VectorXd costs(n);
    std::vector<bool> done(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      states.col(j) = batch[i].state;
      actions.col(j) = batch[i].action;
      next.col(j) = batch[i].next_state;
      costs[j] = batch[i].cost;
      done[i] = batch[i].done;
    }

    if (cfg_.ablation.terminal_q) {
      Eigen::VectorXd v(n);
      if (cfg_.ablation.planner_for_targets) {
        std::vector<Plan> warm;
        warm.reserve(b);
        for (const auto& t : batch) warm.push_back(t.plan);
        const LearnedModel model(cfg_.env, ensemble_, &q_, true);
        auto results = plan_batch(next, warm, model, target_cfg_, target_rng_);
        for (std::size_t i = 0; i < b; ++i) {
          v[static_cast<Eigen::Index>(i)] = results[i].v_mppi;
          batch[i].plan = std::move(results[i].plan);
          ++batch[i].refinements;
        }
      } else {
        // Planner only acts: bootstrap from Q at the stored plan's first action.
        Eigen::MatrixXd first(spec_->action_dim, n);
        for (std::size_t i = 0; i < b; ++i) {
          first.col(static_cast<Eigen::Index>(i)) = batch[i].plan.first();
        }
        v = q_.values(next, first, true);
      }
      const ValueTargetBatch targets = build_targets(costs, v, done, cfg_.gamma);
      q_loss_sum_ += q_.update(states, actions, targets);
      v_sum_ += v.mean();
      ++q_updates_;
    }

    model_mse_sum_ += ensemble_.train_step(states, actions, next, model_rng_);
    ++updates_;
    ++window_updates_;

    if (cfg_.ablation.warm_start) buffer_.reinsert(std::move(batch));
  }

  MetricsRecord close_window() {
    const auto now = Clock::now();
    const double window = std::chrono::duration<double>(now - window_start_).count();
    const long steps = env_step_ - window_first_step_;
    MetricsRecord r;
    r.env_step = env_step_;
    r.episodes = static_cast<long>(returns_.size());
    auto mean = [](double sum, long count) {
      return count > 0 ? sum / static_cast<double>(count)
                       : std::numeric_limits<double>::quiet_NaN();
    };
    if (!window_returns_.empty()) {
      double sum = 0.0;
      for (double x : window_returns_) sum += x;
      r.episode_return = sum / static_cast<double>(window_returns_.size());
    }
    r.q_loss = mean(q_loss_sum_, q_updates_);
    r.model_mse = mean(model_mse_sum_, window_updates_);
    // bootstrap values when Q is trained, otherwise the online planner's
    r.v_mppi_mean = q_updates_ > 0 ? mean(v_sum_, q_updates_)
                                   : mean(online_v_sum_, online_calls_);
    r.ess = mean(ess_sum_, online_calls_);
    r.min_cost = mean(min_cost_sum_, online_calls_);
    r.mean_cost = mean(mean_cost_sum_, online_calls_);
    r.mean_refinements = buffer_.mean_refinements();
    r.wall_seconds = std::chrono::duration<double>(now - run_start_).count();
    r.sps = window > 0.0 ? static_cast<double>(steps) / window
                         : std::numeric_limits<double>::max();

    window_returns_.clear();
    q_loss_sum_ = model_mse_sum_ = v_sum_ = online_v_sum_ = 0.0;
    ess_sum_ = min_cost_sum_ = mean_cost_sum_ = 0.0;
    q_updates_ = window_updates_ = online_calls_ = 0;
    window_first_step_ = env_step_;
    window_start_ = now;
    return r;
  }

  TrainConfig cfg_;
  const EnvSpec* spec_;
  PlannerConfig target_cfg_;
  Rng episode_rng_, warmup_rng_, online_rng_, target_rng_, buffer_rng_, model_rng_;
  DynamicsEnsemble ensemble_;
  SoftQFunction q_;
  ReplayBuffer buffer_;

  EnvState env_;
  Plan plan_;
  double episode_cost_ = 0.0;
  long env_step_ = 0;
  long updates_ = 0;
  std::vector<double> returns_;

  // current metrics window
  std::vector<double> window_returns_;
  double q_loss_sum_ = 0.0, model_mse_sum_ = 0.0, v_sum_ = 0.0, online_v_sum_ = 0.0;
  double ess_sum_ = 0.0, min_cost_sum_ = 0.0, mean_cost_sum_ = 0.0;
  long q_updates_ = 0, window_updates_ = 0, online_calls_ = 0;
  long window_first_step_ = 0;
  Clock::time_point window_start_, run_start_;
};

}  // namespace smpc
