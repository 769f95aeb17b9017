#pragma once

// JSON checkpoints for networks, optimiser state, the dynamics ensemble, the
// soft Q-function and the replay buffer. Every document starts with a
// {"format", "version"} header; matrices are stored as shape + row-major data.
// Doubles are written with round-trip precision, so load(save(x)) == x.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "smpc/ensemble.hpp"
#include "smpc/errors.hpp"
#include "smpc/mlp.hpp"
#include "smpc/optimizer.hpp"
#include "smpc/replay_buffer.hpp"
#include "smpc/soft_q.hpp"

namespace smpc {

using Json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline Json header(std::string_view format) {
  return Json{{"format", format}, {"version", kCheckpointVersion}};
}

inline void check_header(const Json& j, std::string_view format) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    throw CheckpointError("expected a '" + std::string(format) + "' document");
  }
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported " + std::string(format) + " version " +
                          std::to_string(version));
  }
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw CheckpointError("matrix data does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
    }
  }
  return m;
}

inline Json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(data.size()));
}

// Callers only ever see CheckpointError from a bad document.
template <typename F>
auto guarded(std::string_view what, F&& f) {
  try {
    return f();
  } catch (const CheckpointError&) {
    throw;
  } catch (const Json::exception& e) {
    throw CheckpointError("malformed " + std::string(what) + ": " + e.what());
  } catch (const Error& e) {
    throw CheckpointError("invalid " + std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

// ---- networks -------------------------------------------------------------

inline Json mlp_to_json(const MlpParams& p) {
  Json j = detail::header("smpc-mlp");
  Json layers = Json::array();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    layers.push_back({{"weights", detail::matrix_to_json(p.weights[l])},
                      {"bias", detail::vector_to_json(p.biases[l])}});
  }
  Json acts = Json::array();
  for (Activation a : p.activations) acts.push_back(std::string(activation_name(a)));
  j["layers"] = std::move(layers);
  j["activations"] = std::move(acts);
  return j;
}

inline MlpParams mlp_from_json(const Json& j) {
  detail::check_header(j, "smpc-mlp");
  MlpParams p = detail::guarded("network", [&] {
    MlpParams out;
    for (const auto& layer : j.at("layers")) {
      out.weights.push_back(detail::matrix_from_json(layer.at("weights")));
      out.biases.push_back(detail::vector_from_json(layer.at("bias")));
    }
    for (const auto& a : j.at("activations")) {
      out.activations.push_back(parse_activation(a.get<std::string>()));
    }
    return out;
  });
  try {
    p.validate();
  } catch (const Error& e) {
    throw CheckpointError(std::string("invalid network: ") + e.what());
  }
  return p;
}

inline Json gradients_to_json(const GradientBundle& g) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    layers.push_back({{"weights", detail::matrix_to_json(g.weights[l])},
                      {"bias", detail::vector_to_json(g.biases[l])}});
  }
  return layers;
}

inline GradientBundle gradients_from_json(const Json& j) {
  GradientBundle g;
  for (const auto& layer : j) {
    g.weights.push_back(detail::matrix_from_json(layer.at("weights")));
    g.biases.push_back(detail::vector_from_json(layer.at("bias")));
  }
  return g;
}

inline Json optimizer_to_json(const OptimizerState& s) {
  Json j = detail::header("smpc-optimizer");
  j["kind"] = std::string(optimizer_name(s.kind));
  j["learning_rate"] = s.learning_rate;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["epsilon"] = s.epsilon;
  j["step"] = s.step;
  j["first_moment"] = gradients_to_json(s.first_moment);
  j["second_moment"] = gradients_to_json(s.second_moment);
  return j;
}

inline OptimizerState optimizer_from_json(const Json& j) {
  detail::check_header(j, "smpc-optimizer");
  return detail::guarded("optimizer", [&] {
    OptimizerState s;
    s.kind = parse_optimizer(j.at("kind").get<std::string>());
    s.learning_rate = j.at("learning_rate").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.step = j.at("step").get<decltype(s.step)>();
    s.first_moment = gradients_from_json(j.at("first_moment"));
    s.second_moment = gradients_from_json(j.at("second_moment"));
    return s;
  });
}

inline void check_optimizer_matches(const OptimizerState& s, const MlpParams& p) {
  const auto same = [&](const GradientBundle& g) {
    if (g.weights.size() != p.num_layers() || g.biases.size() != p.num_layers()) {
      return false;
    }
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      if (g.weights[l].rows() != p.weights[l].rows() ||
          g.weights[l].cols() != p.weights[l].cols() ||
          g.biases[l].size() != p.biases[l].size()) {
        return false;
      }
    }
    return true;
  };
  if (!same(s.first_moment) || !same(s.second_moment)) {
    throw CheckpointError("optimizer state does not match its network");
  }
}

// ---- ensemble -------------------------------------------------------------

inline Json normalizer_to_json(const Normalizer& n) {
  return Json{{"mean", detail::vector_to_json(n.mean)},
              {"m2", detail::vector_to_json(n.m2)},
              {"count", n.count}};
}

inline Normalizer normalizer_from_json(const Json& j) {
  Normalizer n;
  n.mean = detail::vector_from_json(j.at("mean"));
  n.m2 = detail::vector_from_json(j.at("m2"));
  n.count = j.at("count").get<double>();
  if (n.mean.size() != n.m2.size()) throw CheckpointError("normalizer sizes differ");
  return n;
}

inline Json ensemble_config_to_json(const EnsembleConfig& c) {
  return Json{{"members", c.members},
              {"hidden_width", c.hidden_width},
              {"hidden_layers", c.hidden_layers},
              {"activation", std::string(activation_name(c.activation))},
              {"optimizer", std::string(optimizer_name(c.optimizer))},
              {"learning_rate", c.learning_rate},
              {"bootstrap", c.bootstrap}};
}

inline EnsembleConfig ensemble_config_from_json(const Json& j) {
  EnsembleConfig c;
  c.members = j.at("members").get<int>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.bootstrap = j.at("bootstrap").get<bool>();
  return c;
}

inline Json ensemble_to_json(const DynamicsEnsemble& e) {
  Json j = detail::header("smpc-ensemble");
  j["env"] = std::string(env_name(e.spec().id));
  j["config"] = ensemble_config_to_json(e.config());
  Json members = Json::array();
  for (std::size_t k = 0; k < e.size(); ++k) {
    members.push_back({{"network", mlp_to_json(e.members()[k])},
                       {"optimizer", optimizer_to_json(e.optimizers()[k])}});
  }
  j["members"] = std::move(members);
  j["input_normalizer"] = normalizer_to_json(e.input_normalizer());
  j["output_normalizer"] = normalizer_to_json(e.output_normalizer());
  return j;
}

inline DynamicsEnsemble ensemble_from_json(const Json& j) {
  detail::check_header(j, "smpc-ensemble");
  return detail::guarded("ensemble", [&] {
    EnvId env;
    try {
      env = parse_env_id(j.at("env").get<std::string>());
    } catch (const EnvironmentError& e) {
      throw CheckpointError(e.what());
    }
    const EnvSpec& spec = env_spec(env);
    const EnsembleConfig cfg = ensemble_config_from_json(j.at("config"));
    std::vector<MlpParams> nets;
    std::vector<OptimizerState> opts;
    for (const auto& m : j.at("members")) {
      nets.push_back(mlp_from_json(m.at("network")));
      if (m.contains("optimizer")) opts.push_back(optimizer_from_json(m.at("optimizer")));
    }
    DynamicsEnsemble e = [&] {
      try {
        return DynamicsEnsemble(spec, cfg, nets);
      } catch (const DimensionError& err) {
        throw CheckpointError(std::string("ensemble does not fit its env: ") + err.what());
      }
    }();
    if (!opts.empty()) {
      if (opts.size() != nets.size()) throw CheckpointError("optimizer count mismatch");
      for (std::size_t k = 0; k < nets.size(); ++k) {
        check_optimizer_matches(opts[k], nets[k]);
      }
      e.optimizers() = std::move(opts);
    }
    Normalizer in = normalizer_from_json(j.at("input_normalizer"));
    Normalizer out = normalizer_from_json(j.at("output_normalizer"));
    if (in.dim() != spec.state_dim + spec.action_dim || out.dim() != spec.state_dim) {
      throw CheckpointError("normalizer dimensions do not match the env");
    }
    e.input_normalizer() = std::move(in);
    e.output_normalizer() = std::move(out);
    return e;
  });
}

// ---- soft Q ---------------------------------------------------------------

inline Json soft_q_to_json(const SoftQFunction& q) {
  Json j = detail::header("smpc-soft-q");
  const SoftQConfig& c = q.config();
  j["state_dim"] = q.state_dim();
  j["action_dim"] = q.action_dim();
  j["config"] = {{"hidden_width", c.hidden_width},
                 {"hidden_layers", c.hidden_layers},
                 {"activation", std::string(activation_name(c.activation))},
                 {"optimizer", std::string(optimizer_name(c.optimizer))},
                 {"learning_rate", c.learning_rate},
                 {"target_network", c.target_network},
                 {"polyak", c.polyak},
                 {"output_scale", c.output_scale}};
  j["input_scale"] = detail::vector_to_json(q.input_scale());
  j["network"] = mlp_to_json(q.params());
  j["target"] = q.target_params() ? mlp_to_json(*q.target_params()) : Json(nullptr);
  j["optimizer"] = optimizer_to_json(q.optimizer());
  return j;
}

inline SoftQFunction soft_q_from_json(const Json& j) {
  detail::check_header(j, "smpc-soft-q");
  return detail::guarded("soft Q", [&] {
    const Json& cj = j.at("config");
    SoftQConfig c;
    c.hidden_width = cj.at("hidden_width").get<int>();
    c.hidden_layers = cj.at("hidden_layers").get<int>();
    c.activation = parse_activation(cj.at("activation").get<std::string>());
    c.optimizer = parse_optimizer(cj.at("optimizer").get<std::string>());
    c.learning_rate = cj.at("learning_rate").get<double>();
    c.target_network = cj.at("target_network").get<bool>();
    c.polyak = cj.at("polyak").get<double>();
    c.output_scale = cj.at("output_scale").get<double>();
    Rng unused(0);
    SoftQFunction q(j.at("state_dim").get<int>(), j.at("action_dim").get<int>(), c, unused);
    try {
      q.set_params(mlp_from_json(j.at("network")));
      q.set_input_scale(detail::vector_from_json(j.at("input_scale")));
    } catch (const DimensionError& e) {
      throw CheckpointError(std::string("soft Q does not fit: ") + e.what());
    }
    if (c.target_network) {
      if (j.at("target").is_null()) throw CheckpointError("missing target network");
      MlpParams target = mlp_from_json(j.at("target"));
      if (target.num_parameters() != q.params().num_parameters()) {
        throw CheckpointError("target network shape differs from the live network");
      }
      q.target_params() = std::move(target);
    }
    if (j.contains("optimizer")) {
      OptimizerState s = optimizer_from_json(j.at("optimizer"));
      check_optimizer_matches(s, q.params());
      q.optimizer() = std::move(s);
    }
    return q;
  });
}

// ---- replay buffer --------------------------------------------------------

inline Json transition_to_json(const Transition& t) {
  return Json{{"state", detail::vector_to_json(t.state)},
              {"action", detail::vector_to_json(t.action)},
              {"cost", t.cost},
              {"next_state", detail::vector_to_json(t.next_state)},
              {"done", t.done},
              {"plan", detail::matrix_to_json(t.plan.controls)},
              {"refinements", t.refinements}};
}

inline Transition transition_from_json(const Json& j) {
  Transition t;
  t.state = detail::vector_from_json(j.at("state"));
  t.action = detail::vector_from_json(j.at("action"));
  t.cost = j.at("cost").get<double>();
  t.next_state = detail::vector_from_json(j.at("next_state"));
  t.done = j.at("done").get<bool>();
  t.plan.controls = detail::matrix_from_json(j.at("plan"));
  t.refinements = j.at("refinements").get<std::uint32_t>();
  return t;
}

// Stored transitions oldest first. Outstanding (sampled) transitions are not
// part of the snapshot.
inline Json buffer_to_json(const ReplayBuffer& b) {
  Json j = detail::header("smpc-replay-buffer");
  j["capacity"] = b.capacity();
  std::vector<const Transition*> order;
  for (const auto& t : b.items()) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const Transition* x, const Transition* y) { return x->id < y->id; });
  Json items = Json::array();
  for (const Transition* t : order) items.push_back(transition_to_json(*t));
  j["transitions"] = std::move(items);
  return j;
}

inline ReplayBuffer buffer_from_json(const Json& j) {
  detail::check_header(j, "smpc-replay-buffer");
  return detail::guarded("replay buffer", [&] {
    ReplayBuffer b(j.at("capacity").get<std::size_t>());
    for (const auto& t : j.at("transitions")) b.push(transition_from_json(t));
    return b;
  });
}

// ---- files ----------------------------------------------------------------

inline void save_json(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << j.dump();
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw CheckpointError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace smpc
