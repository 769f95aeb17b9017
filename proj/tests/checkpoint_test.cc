#include "smpc/checkpoint.hpp"

#include <filesystem>

#include <gtest/gtest.h>

namespace smpc {
namespace {

Eigen::MatrixXd uniform_batch(Rng& rng, int rows, int cols, double scale) {
  return scale * Eigen::MatrixXd::NullaryExpr(rows, cols, [&] {
           return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
         });
}

DynamicsEnsemble trained_ensemble(EnvId env, Rng& rng) {
  EnsembleConfig cfg;
  cfg.members = 3;
  cfg.hidden_width = 8;
  DynamicsEnsemble e(env_spec(env), cfg, rng);
  const Eigen::MatrixXd s = uniform_batch(rng, 2, 64, 1.0);
  const Eigen::MatrixXd a = uniform_batch(rng, 1, 64, 1.0);
  const Eigen::MatrixXd s2 = dynamics_batch(env, s, a);
  e.observe(s, a, s2);
  for (int i = 0; i < 5; ++i) e.train_step(s, a, s2, rng);
  return e;
}

SoftQFunction trained_q(Rng& rng) {
  SoftQConfig cfg;
  cfg.hidden_width = 8;
  cfg.output_scale = 0.0;
  SoftQFunction q = SoftQFunction::for_env(env_spec(EnvId::kPendulum), cfg, rng);
  const Eigen::MatrixXd s = uniform_batch(rng, 2, 32, 1.0);
  const Eigen::MatrixXd a = uniform_batch(rng, 1, 32, 2.0);
  ValueTargetBatch y{Eigen::VectorXd::Constant(32, 40.0), std::vector<bool>(32, false)};
  for (int i = 0; i < 5; ++i) q.update(s, a, y);
  return q;
}

// Round trips through text, as a file would.
Json reparse(const Json& j) { return Json::parse(j.dump()); }

TEST(Checkpoint, MlpRoundTripIsExact) {
  Rng rng(1);
  const MlpParams p = make_mlp({3, 5, 2}, Activation::kRelu, rng);
  const MlpParams back = mlp_from_json(reparse(mlp_to_json(p)));
  ASSERT_EQ(back.num_layers(), p.num_layers());
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    EXPECT_EQ(back.weights[l], p.weights[l]);
    EXPECT_EQ(back.biases[l], p.biases[l]);
  }
  EXPECT_EQ(back.activations, p.activations);
}

TEST(Checkpoint, EnsembleRoundTripPredictsIdentically) {
  Rng rng(2);
  for (EnvId env : {EnvId::kDoubleIntegrator, EnvId::kPendulum}) {
    const DynamicsEnsemble e = trained_ensemble(env, rng);
    const DynamicsEnsemble back = ensemble_from_json(reparse(ensemble_to_json(e)));
    ASSERT_EQ(back.size(), e.size());
    const Eigen::MatrixXd s = uniform_batch(rng, 2, 16, 1.5);
    const Eigen::MatrixXd a = uniform_batch(rng, 1, 16, 1.0);
    for (std::size_t k = 0; k < e.size(); ++k) {
      EXPECT_EQ(back.predict_batch(k, s, a), e.predict_batch(k, s, a));
    }
    // Optimiser state survives too: one more identical step stays identical.
    DynamicsEnsemble x = e;
    DynamicsEnsemble y = back;
    const Eigen::MatrixXd s2 = dynamics_batch(env, s, a);
    Rng r1(9), r2(9);
    EXPECT_EQ(x.train_step(s, a, s2, r1), y.train_step(s, a, s2, r2));
    for (std::size_t k = 0; k < e.size(); ++k) {
      EXPECT_EQ(x.predict_batch(k, s, a), y.predict_batch(k, s, a));
    }
  }
}

TEST(Checkpoint, SoftQRoundTripKeepsLiveAndTargetValues) {
  Rng rng(3);
  const SoftQFunction q = trained_q(rng);
  const SoftQFunction back = soft_q_from_json(reparse(soft_q_to_json(q)));
  const Eigen::MatrixXd s = uniform_batch(rng, 2, 10, 2.0);
  const Eigen::MatrixXd a = uniform_batch(rng, 1, 10, 2.0);
  EXPECT_EQ(back.values(s, a), q.values(s, a));
  EXPECT_EQ(back.values(s, a, true), q.values(s, a, true));
  EXPECT_EQ(back.output_scale(), q.output_scale());
  EXPECT_EQ(back.polyak(), q.polyak());
  EXPECT_EQ(back.input_scale(), q.input_scale());
  EXPECT_EQ(back.optimizer().step, q.optimizer().step);
}

TEST(Checkpoint, SoftQWithoutTargetNetwork) {
  Rng rng(4);
  SoftQConfig cfg;
  cfg.hidden_width = 4;
  cfg.target_network = false;
  const SoftQFunction q(2, 1, cfg, rng);
  const SoftQFunction back = soft_q_from_json(reparse(soft_q_to_json(q)));
  EXPECT_FALSE(back.target_params().has_value());
}

TEST(Checkpoint, BufferRoundTripKeepsTransitionsInAgeOrder) {
  Rng rng(5);
  ReplayBuffer b(4);
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.state = Eigen::Vector2d(i, -i);
    t.action = Eigen::VectorXd::Constant(1, 0.1 * i);
    t.cost = 0.5 * i;
    t.next_state = Eigen::Vector2d(i + 1, 0.25);
    t.done = i == 3;
    t.plan = Plan::zeros(1, 3);
    t.plan.controls(0, 2) = i;
    t.refinements = static_cast<std::uint32_t>(i);
    b.push(t);
  }
  // One item outstanding: it is not part of the snapshot.
  auto out = b.sample_remove(1, rng);
  const ReplayBuffer back = buffer_from_json(reparse(buffer_to_json(b)));
  EXPECT_EQ(back.capacity(), 4u);
  ASSERT_EQ(back.size(), 3u);
  std::vector<double> costs;
  for (const auto& t : back.items()) costs.push_back(t.cost);
  std::vector<double> expected;
  for (const auto& t : b.items()) expected.push_back(t.cost);
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(costs, expected);
  for (const auto& t : back.items()) {
    const int i = static_cast<int>(t.cost / 0.5);
    EXPECT_EQ(t.state, Eigen::Vector2d(i, -i));
    EXPECT_EQ(t.done, i == 3);
    EXPECT_EQ(t.plan.controls(0, 2), i);
    EXPECT_EQ(t.refinements, static_cast<std::uint32_t>(i));
  }
}

TEST(Checkpoint, FileRoundTrip) {
  Rng rng(6);
  const auto dir = std::filesystem::temp_directory_path() / "smpc_checkpoint_test";
  std::filesystem::remove_all(dir);
  const SoftQFunction q = trained_q(rng);
  save_json(dir / "nested" / "q.json", soft_q_to_json(q));
  EXPECT_FALSE(std::filesystem::exists(dir / "nested" / "q.json.tmp"));
  const SoftQFunction back = soft_q_from_json(load_json(dir / "nested" / "q.json"));
  const Eigen::MatrixXd s = uniform_batch(rng, 2, 4, 1.0);
  const Eigen::MatrixXd a = uniform_batch(rng, 1, 4, 1.0);
  EXPECT_EQ(back.values(s, a), q.values(s, a));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsWrongFormatAndVersion) {
  Rng rng(7);
  Json j = mlp_to_json(make_mlp({2, 3, 1}, Activation::kTanh, rng));
  EXPECT_THROW(soft_q_from_json(j), CheckpointError);
  j["version"] = kCheckpointVersion + 1;
  EXPECT_THROW(mlp_from_json(j), CheckpointError);
  EXPECT_THROW(mlp_from_json(Json::object()), CheckpointError);
}

TEST(Checkpoint, RejectsShapeMismatches) {
  Rng rng(8);
  Json j = mlp_to_json(make_mlp({2, 3, 1}, Activation::kTanh, rng));
  j["layers"][0]["bias"] = Json::array({0.0, 0.0, 0.0, 0.0});
  EXPECT_THROW(mlp_from_json(j), CheckpointError);

  // Pendulum members are 3 -> 2; claiming a different env must fail.
  Json e = ensemble_to_json(trained_ensemble(EnvId::kPendulum, rng));
  e["members"][0]["network"] = mlp_to_json(make_mlp({2, 3, 1}, Activation::kTanh, rng));
  EXPECT_THROW(ensemble_from_json(e), CheckpointError);

  Json bad_env = ensemble_to_json(trained_ensemble(EnvId::kPendulum, rng));
  bad_env["env"] = "cartpole";
  EXPECT_THROW(ensemble_from_json(bad_env), CheckpointError);

  Json q = soft_q_to_json(trained_q(rng));
  q["input_scale"] = detail::vector_to_json(Eigen::Vector2d(1.0, 1.0));
  EXPECT_THROW(soft_q_from_json(q), CheckpointError);
}

TEST(Checkpoint, UnreadableFiles) {
  EXPECT_THROW(load_json("/nonexistent/dir/x.json"), CheckpointError);
  const auto path = std::filesystem::temp_directory_path() / "smpc_bad.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(load_json(path), CheckpointError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace smpc
