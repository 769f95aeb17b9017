#include "smpc/ensemble.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace smpc {
namespace {

const EnvSpec& di() { return env_spec(EnvId::kDoubleIntegrator); }

// Random double-integrator transitions with states and forces in [-1, 1].
struct Batch {
  Eigen::MatrixXd s, a, s2;
};

Batch di_batch(int n, Rng& rng) {
  Batch b;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  b.s.resize(2, n);
  b.a.resize(1, n);
  for (int j = 0; j < n; ++j) {
    b.s.col(j) << u(rng), u(rng);
    b.a(0, j) = u(rng);
  }
  b.s2 = dynamics_batch(EnvId::kDoubleIntegrator, b.s, b.a);
  return b;
}

EnsembleConfig small(int members = 1) {
  EnsembleConfig c;
  c.members = members;
  c.hidden_width = 32;
  return c;
}

void zero_output_layer(MlpParams& p) {
  p.weights.back().setZero();
  p.biases.back().setZero();
}

TEST(SampleMember, SingletonAlwaysZero) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_member(rng, 1), 0u);
}

TEST(SampleMember, UniformOverFive) {
  Rng rng(2);
  const int draws = 100000;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < draws; ++i) ++counts[sample_member(rng, 5)];
  const double sigma = std::sqrt(draws * 0.2 * 0.8);
  for (int c : counts) EXPECT_NEAR(c, draws * 0.2, 3.0 * sigma);
}

TEST(SampleMember, Reproducible) {
  Rng a(3), b(3);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_member(a, 7), sample_member(b, 7));
}

TEST(Normalizer, RoundTripIsIdentity) {
  Rng rng(4);
  Normalizer n(3);
  n.update(standard_normal(3, 500, rng) * 4.0);
  const Eigen::MatrixXd x = standard_normal(3, 20, rng) * 10.0;
  EXPECT_LT((n.denormalize(n.normalize(x)) - x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((n.unscale(n.scale(x)) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalizer, MatchesTwoPassStatistics) {
  Rng rng(5);
  const Eigen::MatrixXd x = (standard_normal(2, 300, rng).array() * 3.0 + 1.5).matrix();
  Normalizer n(2);
  n.update(x.leftCols(100));
  n.update(x.rightCols(200));
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::VectorXd var = (x.colwise() - mean).rowwise().squaredNorm() / 300.0;
  EXPECT_LT((n.mean - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((n.stddev() - var.cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalizer, ConstantDimensionKeepsPositiveStd) {
  Normalizer n(1);
  n.update(Eigen::MatrixXd::Constant(1, 10, 2.0));
  EXPECT_GT(n.stddev()[0], 0.0);
  EXPECT_TRUE(n.normalize(Eigen::MatrixXd::Constant(1, 1, 2.0)).allFinite());
}

TEST(Predict, ZeroOutputLayerLeavesStateUnchanged) {
  Rng rng(6);
  for (EnvId id : {EnvId::kDoubleIntegrator, EnvId::kPendulum}) {
    DynamicsEnsemble e(env_spec(id), small(3), rng);
    for (auto& m : e.members()) zero_output_layer(m);
    const Batch b = di_batch(50, rng);
    e.observe(b.s, b.a, b.s2);
    for (std::size_t k = 0; k < e.size(); ++k) {
      EXPECT_EQ(e.predict_batch(k, b.s, b.a), b.s);
    }
  }
}

TEST(Predict, MembersDiffer) {
  Rng rng(7);
  DynamicsEnsemble e(di(), small(2), rng);
  const Eigen::Vector2d s(0.3, -0.4);
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.2);
  EXPECT_GT((e.predict(0, s, a) - e.predict(1, s, a)).norm(), 1e-6);
}

TEST(Predict, RejectsBadInput) {
  Rng rng(8);
  DynamicsEnsemble e(di(), small(2), rng);
  const Eigen::VectorXd a = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(e.predict(0, Eigen::Vector2d(INFINITY, 0), a), DimensionError);
  EXPECT_THROW(e.predict(2, Eigen::Vector2d::Zero(), a), DimensionError);
  EXPECT_THROW(e.predict(0, Eigen::Vector3d::Zero(), a), DimensionError);
}

TEST(Predict, PendulumPredictionsAreWrapped) {
  Rng rng(9);
  DynamicsEnsemble e(env_spec(EnvId::kPendulum), small(1), rng);
  e.members()[0].biases.back() << 50.0, 0.0;
  const Eigen::VectorXd s2 =
      e.predict(0, Eigen::Vector2d(3.0, 0.0), Eigen::VectorXd::Zero(1));
  EXPECT_GE(s2[0], -std::numbers::pi);
  EXPECT_LT(s2[0], std::numbers::pi);
}

TEST(Predict, BatchMatchesSingles) {
  Rng rng(10);
  DynamicsEnsemble e(di(), small(2), rng);
  const Batch b = di_batch(9, rng);
  e.observe(b.s, b.a, b.s2);
  const Eigen::MatrixXd out = e.predict_batch(1, b.s, b.a);
  for (int j = 0; j < 9; ++j) {
    EXPECT_LT((out.col(j) - e.predict(1, b.s.col(j), b.a.col(j))).cwiseAbs().maxCoeff(),
              1e-13);
  }
}

TEST(TrainStep, AlreadyOptimalIsAFixedPoint) {
  Rng rng(11);
  EnsembleConfig cfg = small(2);
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.1;
  DynamicsEnsemble e(di(), cfg, rng);
  for (auto& m : e.members()) zero_output_layer(m);
  const std::vector<MlpParams> before = e.members();
  Batch b = di_batch(32, rng);
  b.s2 = b.s;
  e.observe(b.s, b.a, b.s2);
  EXPECT_EQ(e.train_step(b.s, b.a, b.s2, rng), 0.0);
  for (std::size_t k = 0; k < e.size(); ++k) {
    for (std::size_t l = 0; l < before[k].num_layers(); ++l) {
      EXPECT_EQ(e.members()[k].weights[l], before[k].weights[l]);
      EXPECT_EQ(e.members()[k].biases[l], before[k].biases[l]);
    }
  }
}

TEST(TrainStep, OverfitsSinglePointMonotonically) {
  Rng rng(12);
  EnsembleConfig cfg = small(1);
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.01;
  cfg.bootstrap = false;
  DynamicsEnsemble e(di(), cfg, rng);
  const Batch b = di_batch(1, rng);
  const Batch ref = di_batch(64, rng);
  e.observe(ref.s, ref.a, ref.s2);
  std::vector<double> losses;
  for (int k = 0; k < 600; ++k) losses.push_back(e.train_step(b.s, b.a, b.s2, rng));
  for (std::size_t k = 50; k + 1 < losses.size() && losses[k] > 1e-20; ++k) {
    EXPECT_LE(losses[k + 1], losses[k] * (1.0 + 1e-12)) << "step " << k;
  }
  EXPECT_LT(losses.back(), 1e-3 * losses.front());
}

TEST(TrainStep, IdenticalMembersStayIdenticalWithoutBootstrap) {
  Rng rng(13);
  EnsembleConfig cfg = small(1);
  cfg.bootstrap = false;
  const MlpParams seed =
      make_mlp(layer_sizes(3, cfg.hidden_width, cfg.hidden_layers, 2), cfg.activation, rng);
  DynamicsEnsemble single(di(), cfg, std::vector<MlpParams>{seed});
  DynamicsEnsemble triple(di(), cfg, std::vector<MlpParams>{seed, seed, seed});
  const Batch b = di_batch(64, rng);
  single.observe(b.s, b.a, b.s2);
  triple.observe(b.s, b.a, b.s2);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(single.train_step(b.s, b.a, b.s2, rng), triple.train_step(b.s, b.a, b.s2, rng));
  }
  for (std::size_t m = 1; m < 3; ++m) {
    for (std::size_t l = 0; l < seed.num_layers(); ++l) {
      EXPECT_EQ(triple.members()[m].weights[l], triple.members()[0].weights[l]);
    }
  }
}

TEST(TrainStep, BootstrapDiversifiesMembers) {
  Rng rng(14);
  EnsembleConfig cfg = small(1);
  const MlpParams seed =
      make_mlp(layer_sizes(3, cfg.hidden_width, cfg.hidden_layers, 2), cfg.activation, rng);
  DynamicsEnsemble e(di(), cfg, std::vector<MlpParams>{seed, seed});
  const Batch b = di_batch(64, rng);
  e.observe(b.s, b.a, b.s2);
  e.train_step(b.s, b.a, b.s2, rng);
  EXPECT_NE(e.members()[0].weights[0], e.members()[1].weights[0]);
}

TEST(TrainStep, ReducesLossTenfoldInHundredSteps) {
  Rng rng(15);
  DynamicsEnsemble e(di(), EnsembleConfig{}, rng);
  const Batch b = di_batch(256, rng);
  e.observe(b.s, b.a, b.s2);
  const double initial = e.evaluate_mse(b.s, b.a, b.s2);
  for (int k = 0; k < 100; ++k) e.train_step(b.s, b.a, b.s2, rng);
  EXPECT_LT(e.evaluate_mse(b.s, b.a, b.s2), 0.1 * initial);
}

TEST(TrainStep, ConvergesToExactDoubleIntegrator) {
  Rng rng(16);
  EnsembleConfig cfg = small(1);
  cfg.bootstrap = false;
  DynamicsEnsemble e(di(), cfg, rng);
  const Batch data = di_batch(4096, rng);
  e.observe(data.s, data.a, data.s2);
  std::uniform_int_distribution<int> pick(0, 4095);
  Eigen::MatrixXd s(2, 128), a(1, 128), s2(2, 128);
  for (int k = 0; k < 4000; ++k) {
    for (int j = 0; j < 128; ++j) {
      const int i = pick(rng);
      s.col(j) = data.s.col(i);
      a.col(j) = data.a.col(i);
      s2.col(j) = data.s2.col(i);
    }
    e.train_step(s, a, s2, rng);
  }
  const Batch held = di_batch(500, rng);
  const Eigen::MatrixXd err = (e.predict_batch(0, held.s, held.a) - held.s2).cwiseAbs();
  EXPECT_LT(err.rowwise().maxCoeff().maxCoeff(), 1e-3);
}

TEST(TrainStep, RejectsEmptyOrMisalignedBatch) {
  Rng rng(17);
  DynamicsEnsemble e(di(), small(1), rng);
  EXPECT_THROW(e.train_step(Eigen::MatrixXd(2, 0), Eigen::MatrixXd(1, 0),
                            Eigen::MatrixXd(2, 0), rng),
               TrainingError);
  EXPECT_THROW(e.train_step(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(1, 2),
                            Eigen::MatrixXd::Zero(2, 3), rng),
               DimensionError);
}

TEST(TrainStep, NonFiniteLossAbortsWithoutStep) {
  Rng rng(18);
  DynamicsEnsemble e(di(), small(2), rng);
  const std::vector<MlpParams> before = e.members();
  Batch b = di_batch(8, rng);
  b.s2(0, 3) = std::nan("");
  EXPECT_THROW(e.train_step(b.s, b.a, b.s2, rng), TrainingError);
  EXPECT_EQ(e.members()[0].weights[0], before[0].weights[0]);
  EXPECT_EQ(e.members()[1].weights[0], before[1].weights[0]);
}

TEST(Ensemble, RejectsEmptyOrMismatchedMembers) {
  EXPECT_THROW(DynamicsEnsemble(di(), small(1), std::vector<MlpParams>{}), DimensionError);
  Rng rng(19);
  const MlpParams wrong = make_mlp({4, 8, 2}, Activation::kTanh, rng);
  EXPECT_THROW(DynamicsEnsemble(di(), small(1), std::vector<MlpParams>{wrong}),
               DimensionError);
}

}  // namespace
}  // namespace smpc
