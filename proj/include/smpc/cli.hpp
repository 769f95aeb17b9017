#pragma once

// Command-line front end: train / evaluate / bench / ablate.
//
// Every run gets a directory under $SMPC_OUTPUT_ROOT (default ./runs) named
// after the subcommand and a hash of the resolved configuration. The
// manifest is written before any work starts.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smpc/benchmark.hpp"
#include "smpc/config.hpp"
#include "smpc/evaluation.hpp"
#include "smpc/run_io.hpp"
#include "smpc/trainer.hpp"

namespace smpc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline std::filesystem::path output_root() {
  const char* env = std::getenv("SMPC_OUTPUT_ROOT");
  return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace cli_detail {

// Options shared by every subcommand that builds a TrainConfig.
struct ConfigOptions {
  std::string config_file;
  std::string manifest;
  std::optional<std::string> env;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "key = value config file");
    app->add_option("--manifest", manifest, "reuse the resolved config of a run manifest");
    app->add_option("--env", env, "double-integrator | pendulum");
    app->add_option("--steps", steps, "environment steps (train.steps)");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--set", overrides, "key=value override, repeatable")->take_all();
  }

  // defaults <- manifest <- file <- flags
  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!manifest.empty()) cfg = load_manifest_config(manifest);
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (env) set_config_value(cfg, "env", *env);
    if (steps) cfg.steps = *steps;
    if (seed) cfg.seed = *seed;
    for (const auto& o : overrides) apply_override(cfg, o);
    validate_training(cfg);
    return cfg;
  }
};

inline std::filesystem::path run_dir(const std::string& kind, const TrainConfig& cfg,
                                     const std::string& out) {
  if (!out.empty()) return out;
  return output_root() / (kind + "-" + config_hash(cfg));
}

inline Json stats_json(const ReturnStats& s) {
  return {{"mean_return", s.mean}, {"median_return", s.median}, {"returns", s.returns}};
}

inline void write_sps_csv(const std::filesystem::path& path, const std::vector<SpsCell>& cells) {
  std::ofstream out(path);
  out << "n_samples,mode,warm_start,iterations,sps_mean,sps_std,repetitions\n";
  for (const auto& c : cells) {
    out << c.n_samples << "," << c.mode.name << "," << (c.mode.warm_start ? 1 : 0) << ","
        << c.mode.iterations << "," << metrics_detail::num(c.mean) << ","
        << metrics_detail::num(c.stddev) << "," << c.sps.size() << "\n";
  }
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"soft MPCritic: MPPI with a learned soft-Q terminal"};
  app.require_subcommand(1);
  std::string out_dir;

  // train
  cli_detail::ConfigOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "run online learning");
  train_opts.attach(train);
  train->add_option("-o,--out", out_dir, "run directory (default: derived from the config)");

  // evaluate
  std::string eval_run;
  int eval_episodes = 10;
  std::optional<std::uint64_t> eval_seed;
  bool eval_random = false;
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a trained run without learning");
  evaluate->add_option("--run", eval_run, "run directory with manifest.json and checkpoints/")
      ->required();
  evaluate->add_option("--episodes", eval_episodes, "evaluation episodes")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", eval_seed, "evaluation seed (default: the run seed)");
  evaluate->add_flag("--random-baseline", eval_random,
                     "also report a uniform random policy on the same starts");

  // bench
  cli_detail::ConfigOptions bench_opts;
  std::string grid = "table1";
  SpsBenchmarkOptions bench_cfg;
  CLI::App* bench = app.add_subcommand("bench", "steps-per-second benchmark grid");
  bench_opts.attach(bench);
  bench->add_option("--grid", grid, "benchmark grid")->check(CLI::IsMember({"table1"}));
  bench->add_option("--reps", bench_cfg.repetitions, "repetitions per cell")
      ->check(CLI::PositiveNumber);
  bench->add_option("--timed-steps", bench_cfg.timed_steps, "timed steps per repetition")
      ->check(CLI::PositiveNumber);
  bench->add_option("--burn-in", bench_cfg.burn_in_steps, "untimed learning steps per repetition");
  bench->add_option("-o,--out", out_dir, "output directory");

  // ablate
  cli_detail::ConfigOptions ablate_opts;
  std::string arm;
  int seeds = 5;
  CLI::App* ablate = app.add_subcommand("ablate", "train one ablation arm over several seeds");
  ablate_opts.attach(ablate);
  ablate->add_option("--arm", arm, "ablation arm")
      ->required()
      ->check(CLI::IsMember(ablation_arms()));
  ablate->add_option("--seeds", seeds, "number of seeds (seed, seed+1, ...)")
      ->check(CLI::PositiveNumber);
  ablate->add_option("-o,--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    return kExitConfig;
  }

  try {
    if (*train) {
      const TrainConfig cfg = train_opts.resolve();
      const auto dir = cli_detail::run_dir("train", cfg, out_dir);
      save_json(dir / "manifest.json", make_manifest(cfg, dir, "train"));
      out << "run " << config_hash(cfg) << " -> " << dir.string() << "\n";
      const TrainingOutcome res = train_in_dir(cfg, dir);
      out << "final return (last 10 episodes): " << res.final_return << "\n";
      if (res.evaluation) {
        out << "evaluation mean return: " << res.evaluation->mean << "\n";
      }
      return kExitOk;
    }

    if (*evaluate) {
      const std::filesystem::path dir = eval_run;
      const TrainConfig cfg = load_manifest_config(dir / "manifest.json");
      const Agent agent = load_agent(dir / "checkpoints" / "final", cfg);
      const std::uint64_t seed = eval_seed.value_or(cfg.seed);
      Json report{{"run", dir.string()}, {"episodes", eval_episodes}, {"seed", seed}};
      report["agent"] =
          cli_detail::stats_json(evaluate_agent(cfg, agent.ensemble, agent.q, eval_episodes, seed));
      if (eval_random) {
        report["random_baseline"] =
            cli_detail::stats_json(random_policy_returns(cfg.env, eval_episodes, seed));
      }
      if (cfg.env == EnvId::kDoubleIntegrator) {
        report["lqr"] = cli_detail::stats_json(lqr_returns(eval_episodes, seed, cfg.gamma));
      }
      save_json(dir / "evaluation.json", report);
      out << report.dump(2) << "\n";
      return kExitOk;
    }

    if (*bench) {
      const TrainConfig cfg = bench_opts.resolve();
      const auto dir = cli_detail::run_dir("bench", cfg, out_dir);
      Json manifest = make_manifest(cfg, dir, "bench");
      manifest["grid"] = grid;
      manifest["repetitions"] = bench_cfg.repetitions;
      manifest["timed_steps"] = bench_cfg.timed_steps;
      manifest["burn_in_steps"] = bench_cfg.burn_in_steps;
      save_json(dir / "manifest.json", manifest);
      const auto cells = run_sps_benchmark(cfg, bench_cfg);
      cli_detail::write_sps_csv(dir / "sps.csv", cells);
      for (const auto& c : cells) {
        out << "N=" << c.n_samples << " " << c.mode.name << ": " << c.mean << " +- " << c.stddev
            << " steps/s\n";
      }
      out << "table -> " << (dir / "sps.csv").string() << "\n";
      return kExitOk;
    }

    if (*ablate) {
      TrainConfig base = ablate_opts.resolve();
      apply_arm(base, arm);
      validate_training(base);
      const auto dir = cli_detail::run_dir("ablate-" + arm, base, out_dir);
      Json manifest = make_manifest(base, dir, "ablate");
      manifest["arm"] = arm;
      manifest["seeds"] = seeds;
      save_json(dir / "manifest.json", manifest);
      Json per_seed = Json::array();
      std::vector<double> finals;
      for (int k = 0; k < seeds; ++k) {
        TrainConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(k);
        const auto sub = dir / ("seed_" + std::to_string(cfg.seed));
        save_json(sub / "manifest.json", make_manifest(cfg, sub, "train"));
        const TrainingOutcome res = train_in_dir(cfg, sub);
        finals.push_back(res.final_return);
        per_seed.push_back({{"seed", cfg.seed}, {"run_id", res.run_id},
                            {"final_return", res.final_return}});
        out << arm << " seed " << cfg.seed << ": final return " << res.final_return << "\n";
      }
      Json aggregate{{"arm", arm},
                     {"seeds", per_seed},
                     {"median_final_return", median_of(finals)},
                     {"mean_final_return", summarize_returns(finals).mean}};
      save_json(dir / "aggregate.json", aggregate);
      out << "median final return: " << median_of(finals) << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace smpc
