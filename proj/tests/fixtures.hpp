#pragma once

#include <mvtl/nn.hpp>

#include <cmath>
#include <cstdint>
#include <random>

namespace fixtures {

/// 20 points in 6-D, 2 classes split by the sign of a fixed linear
/// function with a margin of at least 0.2.
inline mvtl::nn::Batch separable(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  mvtl::nn::Batch b;
  b.inputs.resize(20, 6);
  const Eigen::RowVectorXd w = (Eigen::RowVectorXd(6) << 1.0, -0.5, 0.25, 0.8, -1.0, 0.3).finished();
  for (Eigen::Index i = 0; i < 20; ++i) {
    Eigen::RowVectorXd x(6);
    double margin = 0.0;
    do {
      for (Eigen::Index k = 0; k < 6; ++k) x(k) = normal(rng);
      margin = x.dot(w);
    } while (std::abs(margin) < 0.2);
    b.inputs.row(i) = x;
    b.labels.push_back(margin > 0.0 ? 1 : 0);
  }
  return b;
}

}  // namespace fixtures
