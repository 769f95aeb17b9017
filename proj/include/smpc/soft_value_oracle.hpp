#pragma once

// Soft value iteration on a finite MDP:
//
//   Q(s, a) = cost(s, a) + gamma * sum_s' P(s' | s, a) V(s')
//   V(s)    = -lambda * log sum_a prior(a) exp(-Q(s, a) / lambda)
//
// Used as a reference for the continuous soft-Q machinery.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smpc/errors.hpp"

namespace smpc {

struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  Eigen::MatrixXd cost;                     // (states x actions)
  std::vector<Eigen::MatrixXd> transition;  // per action: (s x s') rows sum to 1

  void validate() const {
    if (num_states < 1 || num_actions < 1) {
      throw DimensionError("MDP needs at least one state and action");
    }
    if (cost.rows() != num_states || cost.cols() != num_actions ||
        transition.size() != static_cast<std::size_t>(num_actions)) {
      throw DimensionError("MDP cost/transition shapes disagree");
    }
    for (const auto& p : transition) {
      if (p.rows() != num_states || p.cols() != num_states) {
        throw DimensionError("transition matrix has wrong shape");
      }
      if ((p.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-9 ||
          (p.array() < 0.0).any()) {
        throw DimensionError("transition rows must be probability vectors");
      }
    }
  }
};

// Q(s, a) given a value table.
inline Eigen::MatrixXd soft_q_table(const TabularMdp& mdp,
                                    const Eigen::VectorXd& values,
                                    double gamma) {
  Eigen::MatrixXd q(mdp.num_states, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a) {
    q.col(a) = mdp.cost.col(a) + gamma * mdp.transition[a] * values;
  }
  return q;
}

// -lambda log sum_a prior(a) exp(-q(a) / lambda), shifted by min q.
inline double soft_min(const Eigen::RowVectorXd& q, const Eigen::VectorXd& prior,
                       double lambda) {
  const double shift = q.minCoeff();
  double sum = 0.0;
  for (Eigen::Index a = 0; a < q.size(); ++a) {
    sum += prior[a] * std::exp(-(q[a] - shift) / lambda);
  }
  return shift - lambda * std::log(sum);
}

inline Eigen::VectorXd soft_bellman(const TabularMdp& mdp,
                                    const Eigen::VectorXd& prior, double lambda,
                                    double gamma,
                                    const Eigen::VectorXd& values) {
  const Eigen::MatrixXd q = soft_q_table(mdp, values, gamma);
  Eigen::VectorXd out(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) out[s] = soft_min(q.row(s), prior, lambda);
  return out;
}

inline double soft_bellman_residual(const TabularMdp& mdp,
                                    const Eigen::VectorXd& prior,
                                    double lambda, double gamma,
                                    const Eigen::VectorXd& values) {
  return (values - soft_bellman(mdp, prior, lambda, gamma, values))
      .cwiseAbs()
      .maxCoeff();
}

struct SoftValueSolution {
  Eigen::VectorXd values;
  Eigen::MatrixXd q;
  int sweeps = 0;
};

inline SoftValueSolution discrete_soft_value_oracle(
    const TabularMdp& mdp, const Eigen::VectorXd& prior, double lambda,
    double gamma, double tolerance = 1e-10, int max_sweeps = 1000000) {
  mdp.validate();
  if (prior.size() != mdp.num_actions || (prior.array() < 0.0).any() ||
      std::abs(prior.sum() - 1.0) > 1e-9) {
    throw DimensionError("prior must be a pmf over actions");
  }
  if (!(lambda > 0.0)) throw ConvergenceError("lambda must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConvergenceError("gamma must lie in (0, 1)");
  }
  SoftValueSolution sol;
  sol.values = Eigen::VectorXd::Zero(mdp.num_states);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    Eigen::VectorXd next = soft_bellman(mdp, prior, lambda, gamma, sol.values);
    const double change = (next - sol.values).cwiseAbs().maxCoeff();
    sol.values = std::move(next);
    if (change < tolerance) {
      sol.sweeps = sweep;
      sol.q = soft_q_table(mdp, sol.values, gamma);
      return sol;
    }
  }
  throw ConvergenceError("soft value iteration did not converge in " +
                         std::to_string(max_sweeps) + " sweeps");
}

}  // namespace smpc
