#pragma once

#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "smpc/errors.hpp"

namespace smpc {

struct LqrSolution {
  Eigen::MatrixXd K;  // u = -K s
  Eigen::MatrixXd P;  // value s' P s
  int iterations = 0;
};

// One application of the discounted Riccati map
//   P <- Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA.
inline Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& B,
                                   const Eigen::MatrixXd& Q,
                                   const Eigen::MatrixXd& R, double gamma,
                                   const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd S = R + gamma * B.transpose() * P * B;
  const Eigen::MatrixXd BtPA = B.transpose() * P * A;
  Eigen::MatrixXd next = Q + gamma * A.transpose() * P * A -
                         gamma * gamma * BtPA.transpose() *
                             S.ldlt().solve(BtPA);
  return 0.5 * (next + next.transpose());
}

inline double riccati_residual(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R, double gamma,
                               const Eigen::MatrixXd& P) {
  return (P - riccati_map(A, B, Q, R, gamma, P)).cwiseAbs().maxCoeff();
}

inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& R, double gamma,
                                const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd S = R + gamma * B.transpose() * P * B;
  return gamma * S.ldlt().solve(B.transpose() * P * A);
}

// Fixed-point iteration of the discounted Riccati map from P = Q.
inline LqrSolution solve_lqr(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                             double gamma, double tolerance = 1e-10,
                             int max_iterations = 100000) {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw DimensionError("inconsistent LQR matrix shapes");
  }
  if (R.llt().info() != Eigen::Success) {
    throw ConvergenceError("R must be positive definite");
  }
  LqrSolution sol;
  sol.P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::MatrixXd next = riccati_map(A, B, Q, R, gamma, sol.P);
    if (!next.allFinite()) break;
    const double change = (next - sol.P).cwiseAbs().maxCoeff();
    sol.P = std::move(next);
    if (change < tolerance) {
      sol.iterations = it;
      sol.K = lqr_gain(A, B, R, gamma, sol.P);
      return sol;
    }
  }
  throw ConvergenceError("Riccati iteration did not converge in " +
                         std::to_string(max_iterations) + " iterations");
}

}  // namespace smpc
