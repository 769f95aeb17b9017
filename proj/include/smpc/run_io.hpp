#pragma once

// Run directories: manifest.json (written before any work), metrics.csv,
// episodes.csv, summary.json and checkpoints/.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "smpc/checkpoint.hpp"
#include "smpc/config.hpp"
#include "smpc/evaluation.hpp"
#include "smpc/trainer.hpp"

namespace smpc {

#ifdef SMPC_VERSION_STRING
inline constexpr const char* kArtifactVersion = SMPC_VERSION_STRING;
#else
inline constexpr const char* kArtifactVersion = "0.1.0";
#endif

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json config_to_json(const TrainConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : config_items(cfg)) j[k] = v;
  return j;
}

inline TrainConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config", "manifest config must be an object");
  TrainConfig cfg;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw ConfigError(k, "manifest values must be strings");
    set_config_value(cfg, k, v.get<std::string>());
  }
  return cfg;
}

inline Json make_manifest(const TrainConfig& cfg, const std::filesystem::path& dir,
                          const std::string& command) {
  return Json{{"artifact_version", kArtifactVersion},
              {"command", command},
              {"run_id", config_hash(cfg)},
              {"seed", cfg.seed},
              {"start_timestamp", utc_timestamp()},
              {"output_dir", dir.string()},
              {"config", config_to_json(cfg)}};
}

inline TrainConfig load_manifest_config(const std::filesystem::path& path) {
  const Json j = load_json(path);
  if (!j.contains("config")) throw ConfigError("manifest", "no config in " + path.string());
  return config_from_json(j.at("config"));
}

inline void save_agent(const std::filesystem::path& dir, const Trainer& t) {
  save_json(dir / "q.json", soft_q_to_json(t.q()));
  save_json(dir / "ensemble.json", ensemble_to_json(t.ensemble()));
}

struct Agent {
  SoftQFunction q;
  DynamicsEnsemble ensemble;
};

inline Agent load_agent(const std::filesystem::path& dir, const TrainConfig& cfg) {
  Agent a{soft_q_from_json(load_json(dir / "q.json")),
          ensemble_from_json(load_json(dir / "ensemble.json"))};
  const EnvSpec& spec = env_spec(cfg.env);
  if (a.ensemble.spec().id != cfg.env || a.q.state_dim() != spec.state_dim ||
      a.q.action_dim() != spec.action_dim) {
    throw CheckpointError("checkpoint does not match env " + std::string(env_name(cfg.env)));
  }
  return a;
}

struct TrainingOutcome {
  std::string run_id;
  std::filesystem::path dir;
  std::vector<std::string> metrics_rows;  // as written, without header
  std::vector<double> episode_returns;
  double final_return = 0.0;  // mean of the last 10 training episodes
  std::optional<ReturnStats> evaluation;
};

// Trains in `dir`, streaming metrics.csv and writing checkpoints, the
// episode log and summary.json. The manifest is expected to exist already.
inline TrainingOutcome train_in_dir(const TrainConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "checkpoints");
  TrainingOutcome out;
  out.run_id = config_hash(cfg);
  out.dir = dir;
  Trainer trainer(cfg);
  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) throw Error("cannot write " + (dir / "metrics.csv").string());
  metrics << metrics_csv_header() << "\n";
  while (!trainer.done()) {
    if (auto rec = trainer.step()) {
      out.metrics_rows.push_back(metrics_csv_row(*rec));
      metrics << out.metrics_rows.back() << "\n" << std::flush;
    }
    if (cfg.checkpoint_every > 0 && trainer.env_step() % cfg.checkpoint_every == 0 &&
        !trainer.done()) {
      save_agent(dir / "checkpoints" / ("step_" + std::to_string(trainer.env_step())), trainer);
    }
  }
  save_agent(dir / "checkpoints" / "final", trainer);

  out.episode_returns = trainer.episode_returns();
  out.final_return = trainer.final_return(10);
  {
    std::ofstream ep(dir / "episodes.csv");
    ep << "episode,return\n";
    for (std::size_t i = 0; i < out.episode_returns.size(); ++i) {
      ep << i << "," << metrics_detail::num(out.episode_returns[i]) << "\n";
    }
  }
  if (cfg.eval_episodes > 0) {
    out.evaluation = evaluate_agent(cfg, trainer.ensemble(), trainer.q(), cfg.eval_episodes,
                                    cfg.seed);
  }

  std::vector<double> last;
  const std::size_t k = std::min<std::size_t>(10, out.episode_returns.size());
  last.assign(out.episode_returns.end() - static_cast<std::ptrdiff_t>(k),
              out.episode_returns.end());
  Json summary{{"run_id", out.run_id},
               {"env_steps", trainer.env_step()},
               {"episodes", out.episode_returns.size()},
               {"updates", trainer.update_count()},
               {"final_return_mean", out.final_return},
               {"final_return_median", median_of(last)},
               {"config", config_to_json(cfg)}};
  if (out.evaluation) {
    summary["evaluation"] = {{"episodes", out.evaluation->returns.size()},
                             {"mean_return", out.evaluation->mean},
                             {"median_return", out.evaluation->median},
                             {"returns", out.evaluation->returns}};
  }
  save_json(dir / "summary.json", summary);
  return out;
}

}  // namespace smpc
