#pragma once

// Training configuration and its flat "section.key = value" text form.
//
// Resolution is layered: documented defaults, then a config file, then
// individual overrides. Every key is declared once in the schema below,
// which drives parsing, validation messages and serialisation.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "smpc/ensemble.hpp"
#include "smpc/environments.hpp"
#include "smpc/errors.hpp"
#include "smpc/planner.hpp"
#include "smpc/soft_q.hpp"

namespace smpc {

struct AblationFlags {
  bool terminal_q = true;
  int ensemble_size = 5;
  bool warm_start = true;
  bool planner_for_control = true;
  bool planner_for_targets = true;
};

struct TrainConfig {
  EnvId env = EnvId::kPendulum;
  std::uint64_t seed = 0;

  long steps = 50000;
  long warmup_steps = 1000;
  int updates_per_step = 1;
  int batch_size = 32;
  long metrics_every = 1000;
  long checkpoint_every = 0;  // 0: final checkpoint only
  int eval_episodes = 10;

  // Online planner.
  int n_samples = 512;
  int horizon = 8;
  int iterations = 2;
  double lambda = 1.0;
  double noise_std = 0.3;
  double gamma = 0.99;
  MemberSampling member_sampling = MemberSampling::kPerStep;

  // Target planner (shares lambda, noise, horizon and gamma).
  int target_n_samples = 51;
  int target_iterations = 1;

  AblationFlags ablation;
  SoftQConfig q;
  EnsembleConfig model;
  std::size_t buffer_capacity = 100000;

  TrainConfig() { q.output_scale = 0.0; }

  PlannerConfig online_planner() const {
    PlannerConfig c = PlannerConfig::for_env(env_spec(env), noise_std);
    c.lambda = lambda;
    c.n_samples = n_samples;
    c.horizon = horizon;
    c.gamma = gamma;
    c.iterations = iterations;
    c.member_sampling = member_sampling;
    return c;
  }

  PlannerConfig target_planner() const {
    PlannerConfig c = online_planner();
    c.n_samples = target_n_samples;
    c.iterations = target_iterations;
    return c;
  }

  EnsembleConfig ensemble_config() const {
    EnsembleConfig c = model;
    c.members = ablation.ensemble_size;
    return c;
  }
};

namespace config_detail {

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>) {
    r = std::from_chars(first, last, value, std::chars_format::general);
  } else {
    r = std::from_chars(first, last, value);
  }
  if (r.ec != std::errc{} || r.ptr != last) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError(std::string(key), "expected true/false, got '" + std::string(text) + "'");
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename T>
Field number(std::string key, std::string help, T TrainConfig::*member) {
  return {key, std::move(help),
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          },
          [member, key](TrainConfig& c, std::string_view v) {
            c.*member = parse_number<T>(key, v);
          }};
}

template <typename Get, typename Set>
Field custom(std::string key, std::string help, Get get, Set set) {
  return {std::move(key), std::move(help), get, set};
}

inline Field flag(std::string key, std::string help, bool AblationFlags::*member) {
  return {key, std::move(help),
          [member](const TrainConfig& c) {
            return std::string(c.ablation.*member ? "true" : "false");
          },
          [member, key](TrainConfig& c, std::string_view v) {
            c.ablation.*member = parse_bool(key, v);
          }};
}

// q.* and model.* share the network fields.
template <typename Section>
void add_network_fields(std::vector<Field>& out, const std::string& prefix,
                        Section TrainConfig::*section) {
  out.push_back(custom(
      prefix + ".hidden_width", "units per hidden layer",
      [section](const TrainConfig& c) { return std::to_string((c.*section).hidden_width); },
      [section, prefix](TrainConfig& c, std::string_view v) {
        (c.*section).hidden_width = parse_number<int>(prefix + ".hidden_width", v);
      }));
  out.push_back(custom(
      prefix + ".hidden_layers", "number of hidden layers",
      [section](const TrainConfig& c) { return std::to_string((c.*section).hidden_layers); },
      [section, prefix](TrainConfig& c, std::string_view v) {
        (c.*section).hidden_layers = parse_number<int>(prefix + ".hidden_layers", v);
      }));
  out.push_back(custom(
      prefix + ".activation", "tanh | relu",
      [section](const TrainConfig& c) {
        return std::string(activation_name((c.*section).activation));
      },
      [section, prefix](TrainConfig& c, std::string_view v) {
        if (v == "tanh") (c.*section).activation = Activation::kTanh;
        else if (v == "relu") (c.*section).activation = Activation::kRelu;
        else throw ConfigError(prefix + ".activation", "expected tanh or relu");
      }));
  out.push_back(custom(
      prefix + ".optimizer", "adam | sgd",
      [section](const TrainConfig& c) {
        return std::string(optimizer_name((c.*section).optimizer));
      },
      [section, prefix](TrainConfig& c, std::string_view v) {
        if (v == "adam") (c.*section).optimizer = OptimizerKind::kAdam;
        else if (v == "sgd") (c.*section).optimizer = OptimizerKind::kSgd;
        else throw ConfigError(prefix + ".optimizer", "expected adam or sgd");
      }));
  out.push_back(custom(
      prefix + ".learning_rate", "step size",
      [section](const TrainConfig& c) { return format_double((c.*section).learning_rate); },
      [section, prefix](TrainConfig& c, std::string_view v) {
        (c.*section).learning_rate = parse_number<double>(prefix + ".learning_rate", v);
      }));
}

inline std::vector<Field> build_schema() {
  std::vector<Field> f;
  f.push_back(custom(
      "env", "double-integrator | pendulum",
      [](const TrainConfig& c) { return std::string(env_name(c.env)); },
      [](TrainConfig& c, std::string_view v) {
        try {
          c.env = parse_env_id(v);
        } catch (const EnvironmentError& e) {
          throw ConfigError("env", e.what());
        }
      }));
  f.push_back(number("seed", "master seed", &TrainConfig::seed));

  f.push_back(number("train.steps", "environment steps", &TrainConfig::steps));
  f.push_back(number("train.warmup_steps", "random-action steps before learning",
                     &TrainConfig::warmup_steps));
  f.push_back(number("train.updates_per_step", "update cycles per env step",
                     &TrainConfig::updates_per_step));
  f.push_back(number("train.batch_size", "transitions per update", &TrainConfig::batch_size));
  f.push_back(number("train.metrics_every", "env steps per metrics row",
                     &TrainConfig::metrics_every));
  f.push_back(number("train.checkpoint_every", "env steps between checkpoints (0: final only)",
                     &TrainConfig::checkpoint_every));
  f.push_back(number("train.eval_episodes", "evaluation episodes after training",
                     &TrainConfig::eval_episodes));

  f.push_back(number("planner.n_samples", "online samples N", &TrainConfig::n_samples));
  f.push_back(number("planner.horizon", "horizon H", &TrainConfig::horizon));
  f.push_back(number("planner.iterations", "online refinement rounds", &TrainConfig::iterations));
  f.push_back(number("planner.lambda", "temperature", &TrainConfig::lambda));
  f.push_back(number("planner.sigma", "noise standard deviation", &TrainConfig::noise_std));
  f.push_back(number("planner.gamma", "discount", &TrainConfig::gamma));
  f.push_back(custom(
      "planner.member_sampling", "per-step | per-trajectory",
      [](const TrainConfig& c) {
        return std::string(c.member_sampling == MemberSampling::kPerStep ? "per-step"
                                                                         : "per-trajectory");
      },
      [](TrainConfig& c, std::string_view v) {
        if (v == "per-step") c.member_sampling = MemberSampling::kPerStep;
        else if (v == "per-trajectory") c.member_sampling = MemberSampling::kPerTrajectory;
        else throw ConfigError("planner.member_sampling", "expected per-step or per-trajectory");
      }));

  f.push_back(number("target.n_samples", "target samples per transition",
                     &TrainConfig::target_n_samples));
  f.push_back(number("target.iterations", "target refinement rounds",
                     &TrainConfig::target_iterations));

  f.push_back(flag("ablation.terminal_q", "learned terminal Q in the planner",
                   &AblationFlags::terminal_q));
  f.push_back(custom(
      "ablation.ensemble_size", "dynamics models K",
      [](const TrainConfig& c) { return std::to_string(c.ablation.ensemble_size); },
      [](TrainConfig& c, std::string_view v) {
        c.ablation.ensemble_size = parse_number<int>("ablation.ensemble_size", v);
      }));
  f.push_back(flag("ablation.warm_start", "stored plans warm-start target planning",
                   &AblationFlags::warm_start));
  f.push_back(flag("ablation.planner_for_control", "act with the planner",
                   &AblationFlags::planner_for_control));
  f.push_back(flag("ablation.planner_for_targets", "plan value targets",
                   &AblationFlags::planner_for_targets));

  add_network_fields(f, "q", &TrainConfig::q);
  f.push_back(custom(
      "q.target_network", "Polyak-averaged target copy",
      [](const TrainConfig& c) { return std::string(c.q.target_network ? "true" : "false"); },
      [](TrainConfig& c, std::string_view v) {
        c.q.target_network = parse_bool("q.target_network", v);
      }));
  f.push_back(custom(
      "q.polyak", "target averaging coefficient",
      [](const TrainConfig& c) { return format_double(c.q.polyak); },
      [](TrainConfig& c, std::string_view v) { c.q.polyak = parse_number<double>("q.polyak", v); }));
  f.push_back(custom(
      "q.output_scale", "value units per network unit (<= 0: env default)",
      [](const TrainConfig& c) { return format_double(c.q.output_scale); },
      [](TrainConfig& c, std::string_view v) {
        c.q.output_scale = parse_number<double>("q.output_scale", v);
      }));

  add_network_fields(f, "model", &TrainConfig::model);
  f.push_back(custom(
      "model.bootstrap", "per-member bootstrap resampling",
      [](const TrainConfig& c) { return std::string(c.model.bootstrap ? "true" : "false"); },
      [](TrainConfig& c, std::string_view v) {
        c.model.bootstrap = parse_bool("model.bootstrap", v);
      }));

  f.push_back(number("buffer.capacity", "replay capacity", &TrainConfig::buffer_capacity));
  return f;
}

}  // namespace config_detail

inline const std::vector<config_detail::Field>& config_schema() {
  static const std::vector<config_detail::Field> schema = config_detail::build_schema();
  return schema;
}

// Sets one key from its text value.
inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& field : config_schema()) {
    if (field.key == key) {
      field.set(cfg, config_detail::trim(value));
      return;
    }
  }
  throw ConfigError(std::string(key), "unknown configuration key");
}

inline std::string get_config_value(const TrainConfig& cfg, std::string_view key) {
  for (const auto& field : config_schema()) {
    if (field.key == key) return field.get(cfg);
  }
  throw ConfigError(std::string(key), "unknown configuration key");
}

// Applies "key = value" lines; '#' starts a comment.
inline void apply_config_text(TrainConfig& cfg, std::string_view text,
                              std::string_view source = "config") {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string_view body = config_detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(body), std::string(source) + ":" + std::to_string(number) +
                                               ": expected 'key = value'");
    }
    set_config_value(cfg, config_detail::trim(body.substr(0, eq)), body.substr(eq + 1));
  }
}

inline void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(cfg, text.str(), path);
}

// Applies one "key=value" override.
inline void apply_override(TrainConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(std::string(assignment), "override must look like key=value");
  }
  set_config_value(cfg, config_detail::trim(assignment.substr(0, eq)),
                   assignment.substr(eq + 1));
}

inline void validate(const TrainConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ConfigError(key, msg);
  };
  require(c.steps > 0, "train.steps", "must be positive");
  require(c.warmup_steps >= 0, "train.warmup_steps", "must be non-negative");
  require(c.updates_per_step >= 0, "train.updates_per_step", "must be non-negative");
  require(c.batch_size > 0, "train.batch_size", "must be positive");
  require(c.metrics_every > 0, "train.metrics_every", "must be positive");
  require(c.checkpoint_every >= 0, "train.checkpoint_every", "must be non-negative");
  require(c.eval_episodes >= 0, "train.eval_episodes", "must be non-negative");
  require(c.n_samples > 0, "planner.n_samples", "must be positive");
  require(c.horizon >= 1, "planner.horizon", "must be at least 1");
  require(c.iterations >= 1, "planner.iterations", "must be at least 1");
  require(c.lambda > 0.0, "planner.lambda", "must be positive");
  require(c.noise_std > 0.0, "planner.sigma", "must be positive");
  require(c.gamma > 0.0 && c.gamma < 1.0, "planner.gamma", "must lie in (0, 1)");
  require(c.target_n_samples > 0, "target.n_samples", "must be positive");
  require(c.target_n_samples <= c.n_samples, "target.n_samples",
          "must not exceed planner.n_samples");
  require(c.target_iterations >= 1, "target.iterations", "must be at least 1");
  require(c.ablation.ensemble_size >= 1, "ablation.ensemble_size", "must be at least 1");
  require(c.q.hidden_width > 0, "q.hidden_width", "must be positive");
  require(c.q.hidden_layers >= 0, "q.hidden_layers", "must be non-negative");
  require(c.q.learning_rate > 0.0, "q.learning_rate", "must be positive");
  require(c.q.polyak >= 0.0 && c.q.polyak <= 1.0, "q.polyak", "must lie in [0, 1]");
  require(c.model.hidden_width > 0, "model.hidden_width", "must be positive");
  require(c.model.hidden_layers >= 0, "model.hidden_layers", "must be non-negative");
  require(c.model.learning_rate > 0.0, "model.learning_rate", "must be positive");
  require(c.buffer_capacity > 0, "buffer.capacity", "must be positive");
  require(c.buffer_capacity >= static_cast<std::size_t>(c.batch_size), "buffer.capacity",
          "must hold at least one batch");
}

// Every key with its resolved value, in schema order.
inline std::vector<std::pair<std::string, std::string>> config_items(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& field : config_schema()) out.emplace_back(field.key, field.get(c));
  return out;
}

inline std::string config_to_text(const TrainConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_items(c)) out += k + " = " + v + "\n";
  return out;
}

// Short stable identifier of a resolved configuration (FNV-1a of its text).
inline std::string config_hash(const TrainConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config_to_text(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(12, '0');
  for (int i = 11; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace smpc
