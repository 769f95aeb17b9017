#pragma once

// Reference computations used only by the tests. Each one re-derives a
// quantity along a different path from the library code it checks.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "smpc/mlp.hpp"
#include "smpc/random.hpp"
#include "smpc/soft_value_oracle.hpp"

namespace smpc::testing {

// Plain triple-loop evaluation of a network on one input.
inline std::vector<double> straight_line_forward(const MlpParams& p,
                                                 const std::vector<double>& x) {
  std::vector<double> cur = x;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto& w = p.weights[l];
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = p.biases[l][i];
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        acc += w(i, j) * cur[static_cast<std::size_t>(j)];
      }
      if (l + 1 < p.num_layers()) {
        acc = p.activations[l] == Activation::kTanh ? std::tanh(acc)
                                                    : std::max(acc, 0.0);
      }
      next[static_cast<std::size_t>(i)] = acc;
    }
    cur = std::move(next);
  }
  return cur;
}

// Scalar objective upstream' * f(params, input) via the straight-line path.
inline double projected_output(const MlpParams& p, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& upstream) {
  const std::vector<double> out = straight_line_forward(
      p, std::vector<double>(input.data(), input.data() + input.size()));
  double s = 0.0;
  for (Eigen::Index i = 0; i < upstream.size(); ++i) {
    s += upstream[i] * out[static_cast<std::size_t>(i)];
  }
  return s;
}

// Central finite differences of upstream' * f with respect to every
// parameter and every input entry.
struct FiniteDifferenceGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input;
};

inline FiniteDifferenceGradients finite_difference(MlpParams p,
                                                   Eigen::VectorXd input,
                                                   const Eigen::VectorXd& upstream,
                                                   double h = 1e-5) {
  FiniteDifferenceGradients fd;
  auto central = [&](double& slot) {
    const double keep = slot;
    slot = keep + h;
    const double plus = projected_output(p, input, upstream);
    slot = keep - h;
    const double minus = projected_output(p, input, upstream);
    slot = keep;
    return (plus - minus) / (2.0 * h);
  };
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    Eigen::MatrixXd gw(p.weights[l].rows(), p.weights[l].cols());
    for (Eigen::Index i = 0; i < gw.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw.cols(); ++j) gw(i, j) = central(p.weights[l](i, j));
    }
    Eigen::VectorXd gb(p.biases[l].size());
    for (Eigen::Index i = 0; i < gb.size(); ++i) gb[i] = central(p.biases[l][i]);
    fd.weights.push_back(gw);
    fd.biases.push_back(gb);
  }
  fd.input.resize(input.size());
  for (Eigen::Index i = 0; i < input.size(); ++i) fd.input[i] = central(input[i]);
  return fd;
}

// |a - b| <= rel * max(|a|, |b|) or |a - b| <= abs_floor.
inline bool gradient_close(double a, double b, double rel, double abs_floor) {
  const double diff = std::abs(a - b);
  return diff <= abs_floor || diff <= rel * std::max(std::abs(a), std::abs(b));
}

inline MlpParams random_network(Rng& rng, Activation act, int in, int out) {
  std::uniform_int_distribution<int> width(2, 8);
  std::uniform_int_distribution<int> depth(1, 3);
  std::vector<int> sizes{in};
  const int d = depth(rng);
  for (int i = 0; i < d; ++i) sizes.push_back(width(rng));
  sizes.push_back(out);
  return make_mlp(sizes, act, rng);
}

inline TabularMdp random_mdp(Rng& rng, int states, int actions) {
  TabularMdp mdp;
  mdp.num_states = states;
  mdp.num_actions = actions;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> dirichlet(1.0, 1.0);
  mdp.cost.resize(states, actions);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) mdp.cost(s, a) = unit(rng);
  }
  for (int a = 0; a < actions; ++a) {
    Eigen::MatrixXd p(states, states);
    for (int s = 0; s < states; ++s) {
      for (int s2 = 0; s2 < states; ++s2) p(s, s2) = dirichlet(rng);
      p.row(s) /= p.row(s).sum();
    }
    mdp.transition.push_back(p);
  }
  return mdp;
}

// Monte Carlo estimate of the trajectory-level soft value
//   V(s) = -lambda log E[exp(-(1/lambda) sum_t gamma^t cost(s_t, a_t)) | s_0 = s]
// with actions drawn from `prior`, truncated after `horizon` steps.
inline double monte_carlo_soft_value(const TabularMdp& mdp,
                                     const Eigen::VectorXd& prior,
                                     double lambda, double gamma, int start,
                                     long trajectories, int horizon,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> cdf(
      static_cast<std::size_t>(mdp.num_states * mdp.num_actions));
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      auto& c = cdf[static_cast<std::size_t>(s * mdp.num_actions + a)];
      double acc = 0.0;
      for (int s2 = 0; s2 < mdp.num_states; ++s2) {
        acc += mdp.transition[static_cast<std::size_t>(a)](s, s2);
        c.push_back(acc);
      }
    }
  }
  std::vector<double> prior_cdf;
  double acc = 0.0;
  for (Eigen::Index a = 0; a < prior.size(); ++a) {
    acc += prior[a];
    prior_cdf.push_back(acc);
  }
  auto draw = [&](const std::vector<double>& c) {
    const double u = unit(rng);
    int k = 0;
    while (k + 1 < static_cast<int>(c.size()) && u > c[static_cast<std::size_t>(k)]) ++k;
    return k;
  };
  std::vector<double> totals(static_cast<std::size_t>(trajectories));
  for (long n = 0; n < trajectories; ++n) {
    int s = start;
    double total = 0.0;
    double disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = draw(prior_cdf);
      total += disc * mdp.cost(s, a);
      disc *= gamma;
      s = draw(cdf[static_cast<std::size_t>(s * mdp.num_actions + a)]);
    }
    totals[static_cast<std::size_t>(n)] = total;
  }
  const double shift = *std::min_element(totals.begin(), totals.end());
  double sum = 0.0;
  for (double t : totals) sum += std::exp(-(t - shift) / lambda);
  return shift - lambda * std::log(sum / static_cast<double>(trajectories));
}

// Exact trajectory-level soft value for a truncated horizon, by enumerating
// every action sequence and successor state.
inline double enumerated_soft_value(const TabularMdp& mdp,
                                    const Eigen::VectorXd& prior, double lambda,
                                    double gamma, int start, int horizon) {
  // E[exp(-X / lambda)] accumulated over (probability, discounted cost) paths.
  struct Path {
    int state;
    double prob;
    double cost;
  };
  std::vector<Path> paths{{start, 1.0, 0.0}};
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    std::vector<Path> next;
    for (const auto& p : paths) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        for (int s2 = 0; s2 < mdp.num_states; ++s2) {
          const double pr = p.prob * prior[a] *
                            mdp.transition[static_cast<std::size_t>(a)](p.state, s2);
          if (pr == 0.0) continue;
          next.push_back({s2, pr, p.cost + disc * mdp.cost(p.state, a)});
        }
      }
    }
    paths = std::move(next);
    disc *= gamma;
  }
  double expectation = 0.0;
  for (const auto& p : paths) expectation += p.prob * std::exp(-p.cost / lambda);
  return -lambda * std::log(expectation);
}

// Dense value iteration on the discounted LQ problem, written without the
// closed-form Riccati map: V_{k+1}(x) = min_u [x'Qx + u'Ru + g V_k(Ax + Bu)]
// with V_k(x) = x' P_k x, minimising over u explicitly through the normal
// equations of the stacked quadratic form in (x, u).
inline Eigen::MatrixXd lq_value_iteration(const Eigen::MatrixXd& A,
                                          const Eigen::MatrixXd& B,
                                          const Eigen::MatrixXd& Q,
                                          const Eigen::MatrixXd& R, double gamma,
                                          int sweeps) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd F(n, n + m);
  F << A, B;
  for (int k = 0; k < sweeps; ++k) {
    Eigen::MatrixXd H = gamma * F.transpose() * P * F;
    H.topLeftCorner(n, n) += Q;
    H.bottomRightCorner(m, m) += R;
    const Eigen::MatrixXd Hxx = H.topLeftCorner(n, n);
    const Eigen::MatrixXd Hxu = H.topRightCorner(n, m);
    const Eigen::MatrixXd Huu = H.bottomRightCorner(m, m);
    // Schur complement of the control block.
    Eigen::MatrixXd next = Hxx - Hxu * Huu.inverse() * Hxu.transpose();
    P = 0.5 * (next + next.transpose());
  }
  return P;
}

}  // namespace smpc::testing
