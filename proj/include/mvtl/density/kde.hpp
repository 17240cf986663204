#pragma once

// Gaussian-kernel density estimate with a diagonal bandwidth matrix H.

#include <mvtl/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

namespace mvtl {

struct BandwidthRule {
  enum class Kind { silverman, scott, fixed };
  Kind kind = Kind::silverman;
  double h = 1.0;  // used by Kind::fixed

  static BandwidthRule silverman() { return {Kind::silverman, 1.0}; }
  static BandwidthRule scott() { return {Kind::scott, 1.0}; }
  static BandwidthRule fixed(double h) { return {Kind::fixed, h}; }
};

/// Bandwidth substituted for a dimension with zero sample variance.
inline constexpr double kBandwidthFloor = 1e-6;

class KdeModel {
 public:
  KdeModel() = default;

  /// `support` holds one point per row; `bandwidth` is the per-dimension
  /// kernel standard deviation, so H = diag(bandwidth^2).
  KdeModel(Eigen::MatrixXd support, Eigen::VectorXd bandwidth) : support_(std::move(support)), bandwidth_(std::move(bandwidth)) {
    if (support_.rows() == 0 || support_.cols() == 0) throw Error("KDE needs at least one support point");
    if (bandwidth_.size() != support_.cols()) throw Error("KDE bandwidth dimension mismatch");
    if (!support_.allFinite()) throw Error("KDE support points must be finite");
    for (Eigen::Index k = 0; k < bandwidth_.size(); ++k) {
      if (!(bandwidth_(k) > 0.0) || !std::isfinite(bandwidth_(k))) throw Error("KDE bandwidth must be positive");
    }
  }

  std::size_t dimension() const { return static_cast<std::size_t>(support_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(support_.rows()); }
  const Eigen::MatrixXd& support() const { return support_; }
  const Eigen::VectorXd& bandwidth() const { return bandwidth_; }
  /// Diagonal of H.
  Eigen::VectorXd bandwidth_matrix_diagonal() const { return bandwidth_.array().square(); }

 private:
  Eigen::MatrixXd support_;
  Eigen::VectorXd bandwidth_;
};

/// Fits a KDE to the rows of `points`. Silverman: (4/(d+2))^(1/(d+4)) n^(-1/(d+4)) sigma;
/// Scott: n^(-1/(d+4)) sigma; sigma is the per-dimension sample standard deviation.
inline KdeModel fit_kde(const Eigen::MatrixXd& points, const BandwidthRule& rule = {}) {
  const auto n = static_cast<double>(points.rows());
  const auto d = static_cast<double>(points.cols());
  if (points.rows() < 2) throw Error("fit_kde: need at least 2 points");
  if (points.cols() < 1) throw Error("fit_kde: zero-dimensional data");
  if (rule.kind == BandwidthRule::Kind::fixed && !(rule.h > 0.0)) throw Error("fit_kde: fixed bandwidth must be positive");

  double factor = 1.0;
  if (rule.kind == BandwidthRule::Kind::silverman) {
    factor = std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) * std::pow(n, -1.0 / (d + 4.0));
  } else if (rule.kind == BandwidthRule::Kind::scott) {
    factor = std::pow(n, -1.0 / (d + 4.0));
  }

  Eigen::VectorXd h(points.cols());
  const Eigen::RowVectorXd mean = points.colwise().mean();
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    if (rule.kind == BandwidthRule::Kind::fixed) {
      h(k) = rule.h;
      continue;
    }
    const double var = (points.col(k).array() - mean(k)).square().sum() / (n - 1.0);
    const double sigma = std::sqrt(var);
    if (!(sigma > 0.0)) {
      warn("fit_kde: dimension " + std::to_string(k) + " has zero variance; using bandwidth " + std::to_string(kBandwidthFloor));
      h(k) = kBandwidthFloor;
    } else {
      h(k) = factor * sigma;
    }
  }
  return KdeModel(points, h);
}

/// log Q(x) for the kernel mixture, via log-sum-exp.
inline double kde_log_density(const KdeModel& model, const Eigen::VectorXd& x) {
  const auto& s = model.support();
  const auto& h = model.bandwidth();
  if (x.size() != s.cols()) throw Error("kde_log_density: point has the wrong dimension");
  const Eigen::Index n = s.rows();
  Eigen::VectorXd exponents(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    exponents(i) = -0.5 * ((x.transpose() - s.row(i)).array() / h.transpose().array()).square().sum();
  }
  const double top = exponents.maxCoeff();
  const double lse = top + std::log((exponents.array() - top).exp().sum());
  const double d = static_cast<double>(s.cols());
  return lse - std::log(static_cast<double>(n)) - 0.5 * d * std::log(2.0 * std::numbers::pi) - h.array().log().sum();
}

/// Draws `count` points: a uniformly chosen support point plus N(0, H) noise.
inline Eigen::MatrixXd sample_kde(const KdeModel& model, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, model.support().rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index d = model.support().cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), d);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Eigen::Index i = pick(rng);
    for (Eigen::Index k = 0; k < d; ++k) out(r, k) = model.support()(i, k) + model.bandwidth()(k) * normal(rng);
  }
  return out;
}

}  // namespace mvtl
