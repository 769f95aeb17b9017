#pragma once

// Steady-state environment steps per second of the learning loop for a grid
// of target-planner sample counts and start modes.

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "smpc/config.hpp"
#include "smpc/trainer.hpp"

namespace smpc {

struct SpsMode {
  std::string name;
  bool warm_start;
  int iterations;
};

inline std::vector<SpsMode> table1_modes() {
  return {{"warm-1", true, 1}, {"cold-1", false, 1}, {"cold-5", false, 5}, {"cold-10", false, 10}};
}

inline std::vector<int> table1_sample_counts() { return {10, 20, 50}; }

struct SpsBenchmarkOptions {
  std::vector<int> sample_counts = table1_sample_counts();
  std::vector<SpsMode> modes = table1_modes();
  long burn_in_steps = 200;   // learning steps after warm-up, untimed
  long timed_steps = 2000;
  int repetitions = 3;
};

struct SpsCell {
  int n_samples = 0;
  SpsMode mode;
  std::vector<double> sps;  // one per repetition
  double mean = 0.0;
  double stddev = 0.0;
};

// SPS of one configuration: warm-up and burn-in untimed, then `timed` steps.
inline double measure_sps(TrainConfig cfg, long burn_in, long timed) {
  cfg.steps = cfg.warmup_steps + burn_in + timed;
  cfg.metrics_every = cfg.steps;
  Trainer trainer(cfg);
  while (trainer.env_step() < cfg.warmup_steps + burn_in) trainer.step();
  const auto start = std::chrono::steady_clock::now();
  while (!trainer.done()) trainer.step();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return static_cast<double>(timed) / seconds;
}

inline std::vector<SpsCell> run_sps_benchmark(const TrainConfig& base,
                                              const SpsBenchmarkOptions& opt = {}) {
  std::vector<SpsCell> cells;
  for (int n : opt.sample_counts) {
    for (const SpsMode& mode : opt.modes) {
      SpsCell cell;
      cell.n_samples = n;
      cell.mode = mode;
      for (int rep = 0; rep < opt.repetitions; ++rep) {
        TrainConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(rep);
        cfg.target_n_samples = n;
        cfg.target_iterations = mode.iterations;
        cfg.ablation.warm_start = mode.warm_start;
        cell.sps.push_back(measure_sps(cfg, opt.burn_in_steps, opt.timed_steps));
      }
      double sum = 0.0;
      for (double x : cell.sps) sum += x;
      cell.mean = sum / static_cast<double>(cell.sps.size());
      double sq = 0.0;
      for (double x : cell.sps) sq += (x - cell.mean) * (x - cell.mean);
      cell.stddev = cell.sps.size() > 1 ? std::sqrt(sq / static_cast<double>(cell.sps.size() - 1))
                                        : 0.0;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline const SpsCell* find_cell(const std::vector<SpsCell>& cells, int n, const std::string& mode) {
  for (const auto& c : cells) {
    if (c.n_samples == n && c.mode.name == mode) return &c;
  }
  return nullptr;
}

}  // namespace smpc
