#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace smpc {

using Rng = std::mt19937_64;

// Independent generator for a named sub-stream of a run seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream & 0xffffffffu),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols,
                                       Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  }
  return out;
}

inline Eigen::VectorXd uniform_vector(const Eigen::VectorXd& low,
                                      const Eigen::VectorXd& high, Rng& rng) {
  Eigen::VectorXd out(low.size());
  for (Eigen::Index i = 0; i < low.size(); ++i) {
    std::uniform_real_distribution<double> dist(low[i], high[i]);
    out[i] = dist(rng);
  }
  return out;
}

}  // namespace smpc
