#pragma once

// Affine-coupling normalizing flow F = f_L o ... o f_1 trained by maximum
// likelihood:  log Q(S) = log N(F(S); 0, I) + sum_i log|det df_i|.
//
// Each coupling layer keeps the coordinates selected by its mask and maps
// the others as  y = x * exp(s(x_c)) + t(x_c),  where s and t come from a
// two-hidden-layer tanh perceptron. s is soft-clamped to |s| < 5 and the
// output layer starts at zero, so an untrained flow is the identity.

#include <mvtl/adam.hpp>
#include <mvtl/error.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mvtl {

struct FlowConfig {
  std::size_t layers = 6;
  std::size_t width = 32;
  std::size_t iterations = 2000;
  double learning_rate = 1e-3;
  /// Std-dev of the noise added to training points when the data contain
  /// near-duplicates (minimum pairwise distance below kDuplicateThreshold).
  double perturbation = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (layers < 2) throw Error("flow needs at least 2 coupling layers");
    if (width == 0) throw Error("flow coupling width must be positive");
    if (!(learning_rate > 0.0)) throw Error("flow learning rate must be positive");
    if (!(perturbation >= 0.0)) throw Error("flow perturbation must be non-negative");
  }
};

inline constexpr double kLogScaleClamp = 5.0;
inline constexpr double kDuplicateThreshold = 1e-8;

struct CouplingLayer {
  enum Param { W1, b1, W2, b2, W3, b3, kParamCount };

  /// 1 = conditioning coordinate (passed through), 0 = transformed.
  std::vector<int> mask;
  std::vector<int> cond, trans;
  std::array<Eigen::MatrixXd, kParamCount> params;
};

/// Intermediate values of one layer's forward pass, kept for backprop.
struct CouplingCache {
  Eigen::MatrixXd x, h1, h2, s;
};

class FlowModel {
 public:
  FlowModel() = default;

  /// Untrained (identity) flow for `dimension` coordinates.
  FlowModel(std::size_t dimension, const FlowConfig& config);

  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  const FlowConfig& config() const { return config_; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  void set_standardization(Eigen::VectorXd mean, Eigen::VectorXd scale);

  /// Rows of `points` -> latent rows and per-row log|det J| (including the
  /// standardization term).
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> forward(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& latent) const;
  Eigen::VectorXd log_density(const Eigen::MatrixXd& points) const;
  double mean_log_likelihood(const Eigen::MatrixXd& points) const { return log_density(points).mean(); }

  std::size_t parameter_count() const;
  std::vector<double> parameter_vector() const;
  void set_parameter_vector(const std::vector<double>& values);

  /// Mean negative log-likelihood of the rows of `points` and its gradient
  /// with respect to parameter_vector().
  std::pair<double, std::vector<double>> loss_and_gradient(const Eigen::MatrixXd& points) const;

 private:
  // Forward/backward in standardized coordinates.
  Eigen::MatrixXd forward_std(const Eigen::MatrixXd& z, Eigen::VectorXd& log_det, std::vector<CouplingCache>* caches) const;
  std::pair<double, std::vector<Eigen::MatrixXd>> loss_and_gradient_std(const Eigen::MatrixXd& z) const;
  double standardization_log_det() const { return -scale_.array().log().sum(); }

  FlowConfig config_;
  Eigen::VectorXd mean_, scale_;
  std::vector<CouplingLayer> layers_;

  friend FlowModel fit_flow(const Eigen::MatrixXd& points, const FlowConfig& config);
};

namespace detail {

inline Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

inline void put_columns(Eigen::MatrixXd& m, const std::vector<int>& cols, const Eigen::MatrixXd& values) {
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(cols[j]) = values.col(static_cast<Eigen::Index>(j));
}

// Conditioner network: returns (h1, h2, raw output) for conditioning inputs c.
inline void conditioner(const CouplingLayer& L, const Eigen::MatrixXd& c, Eigen::MatrixXd& h1, Eigen::MatrixXd& h2,
                        Eigen::MatrixXd& out) {
  const auto& p = L.params;
  h1 = ((c * p[CouplingLayer::W1].transpose()).rowwise() + p[CouplingLayer::b1].col(0).transpose()).array().tanh().matrix();
  h2 = ((h1 * p[CouplingLayer::W2].transpose()).rowwise() + p[CouplingLayer::b2].col(0).transpose()).array().tanh().matrix();
  out = (h2 * p[CouplingLayer::W3].transpose()).rowwise() + p[CouplingLayer::b3].col(0).transpose();
}

inline Eigen::MatrixXd soft_clamp(const Eigen::MatrixXd& raw) {
  return (kLogScaleClamp * (raw.array() / kLogScaleClamp).tanh()).matrix();
}

}  // namespace detail

inline FlowModel::FlowModel(std::size_t dimension, const FlowConfig& config) : config_(config) {
  config_.validate();
  if (dimension < 2) throw Error("flow needs dimension >= 2");
  mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension));
  scale_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dimension));
  std::mt19937_64 rng(config.seed);
  const auto width = static_cast<Eigen::Index>(config.width);
  for (std::size_t l = 0; l < config.layers; ++l) {
    CouplingLayer layer;
    for (std::size_t k = 0; k < dimension; ++k) {
      const int keep = (k + l) % 2 == 0 ? 1 : 0;
      layer.mask.push_back(keep);
      (keep ? layer.cond : layer.trans).push_back(static_cast<int>(k));
    }
    const auto c = static_cast<Eigen::Index>(layer.cond.size());
    const auto t = static_cast<Eigen::Index>(layer.trans.size());
    auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
      return m;
    };
    layer.params[CouplingLayer::W1] = uniform(width, c, static_cast<double>(c));
    layer.params[CouplingLayer::b1] = Eigen::MatrixXd::Zero(width, 1);
    layer.params[CouplingLayer::W2] = uniform(width, width, static_cast<double>(width));
    layer.params[CouplingLayer::b2] = Eigen::MatrixXd::Zero(width, 1);
    layer.params[CouplingLayer::W3] = Eigen::MatrixXd::Zero(2 * t, width);
    layer.params[CouplingLayer::b3] = Eigen::MatrixXd::Zero(2 * t, 1);
    layers_.push_back(std::move(layer));
  }
}

inline void FlowModel::set_standardization(Eigen::VectorXd mean, Eigen::VectorXd scale) {
  if (mean.size() != mean_.size() || scale.size() != scale_.size()) throw Error("flow standardization dimension mismatch");
  if ((scale.array() <= 0.0).any()) throw Error("flow standardization scale must be positive");
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

inline Eigen::MatrixXd FlowModel::forward_std(const Eigen::MatrixXd& z, Eigen::VectorXd& log_det,
                                              std::vector<CouplingCache>* caches) const {
  Eigen::MatrixXd x = z;
  log_det = Eigen::VectorXd::Zero(z.rows());
  if (caches) caches->clear();
  for (const auto& L : layers_) {
    const auto t = static_cast<Eigen::Index>(L.trans.size());
    Eigen::MatrixXd c = detail::take_columns(x, L.cond);
    Eigen::MatrixXd h1, h2, out;
    detail::conditioner(L, c, h1, h2, out);
    Eigen::MatrixXd s = detail::soft_clamp(out.leftCols(t));
    Eigen::MatrixXd xt = detail::take_columns(x, L.trans);
    Eigen::MatrixXd yt = (xt.array() * s.array().exp() + out.rightCols(t).array()).matrix();
    log_det += s.rowwise().sum();
    if (caches) caches->push_back({x, std::move(h1), std::move(h2), s});
    detail::put_columns(x, L.trans, yt);
  }
  return x;
}

inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> FlowModel::forward(const Eigen::MatrixXd& points) const {
  if (points.cols() != mean_.size()) throw Error("flow_forward: point has the wrong dimension");
  Eigen::MatrixXd z = (points.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  Eigen::VectorXd log_det;
  Eigen::MatrixXd h = forward_std(z, log_det, nullptr);
  log_det.array() += standardization_log_det();
  return {std::move(h), std::move(log_det)};
}

inline Eigen::MatrixXd FlowModel::inverse(const Eigen::MatrixXd& latent) const {
  if (latent.cols() != mean_.size()) throw Error("flow_inverse: latent has the wrong dimension");
  Eigen::MatrixXd y = latent;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const auto& L = *it;
    const auto t = static_cast<Eigen::Index>(L.trans.size());
    Eigen::MatrixXd c = detail::take_columns(y, L.cond);
    Eigen::MatrixXd h1, h2, out;
    detail::conditioner(L, c, h1, h2, out);
    Eigen::MatrixXd s = detail::soft_clamp(out.leftCols(t));
    Eigen::MatrixXd yt = detail::take_columns(y, L.trans);
    Eigen::MatrixXd xt = ((yt - out.rightCols(t)).array() * (-s.array()).exp()).matrix();
    detail::put_columns(y, L.trans, xt);
  }
  return (y.array().rowwise() * scale_.transpose().array()).matrix().rowwise() + mean_.transpose();
}

inline Eigen::VectorXd FlowModel::log_density(const Eigen::MatrixXd& points) const {
  auto [h, log_det] = forward(points);
  const double d = static_cast<double>(dimension());
  Eigen::VectorXd base = -0.5 * h.rowwise().squaredNorm().array() - 0.5 * d * std::log(2.0 * std::numbers::pi);
  return base + log_det;
}

inline std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_)
    for (const auto& p : L.params) n += static_cast<std::size_t>(p.size());
  return n;
}

inline std::vector<double> FlowModel::parameter_vector() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& L : layers_)
    for (const auto& p : L.params)
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) out.push_back(p(i, j));
  return out;
}

inline void FlowModel::set_parameter_vector(const std::vector<double>& values) {
  if (values.size() != parameter_count()) throw Error("flow parameter vector has the wrong size");
  std::size_t k = 0;
  for (auto& L : layers_)
    for (auto& p : L.params)
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = values[k++];
}

inline std::pair<double, std::vector<Eigen::MatrixXd>> FlowModel::loss_and_gradient_std(const Eigen::MatrixXd& z) const {
  const auto n = static_cast<double>(z.rows());
  const double d = static_cast<double>(dimension());
  std::vector<CouplingCache> caches;
  Eigen::VectorXd log_det;
  Eigen::MatrixXd h = forward_std(z, log_det, &caches);
  const double loss =
      -((-0.5 * h.rowwise().squaredNorm().array() - 0.5 * d * std::log(2.0 * std::numbers::pi)).matrix() + log_det).mean();

  std::vector<Eigen::MatrixXd> grads(layers_.size() * CouplingLayer::kParamCount);
  Eigen::MatrixXd g = h / n;  // dL/dy of the last layer
  const double g_log_det = -1.0 / n;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& L = layers_[li];
    const auto& cache = caches[li];
    const auto& p = L.params;
    const auto t = static_cast<Eigen::Index>(L.trans.size());
    Eigen::MatrixXd c = detail::take_columns(cache.x, L.cond);
    Eigen::MatrixXd xt = detail::take_columns(cache.x, L.trans);
    Eigen::MatrixXd gyt = detail::take_columns(g, L.trans);
    Eigen::ArrayXXd es = cache.s.array().exp();

    Eigen::MatrixXd gxt = (gyt.array() * es).matrix();
    Eigen::ArrayXXd gs = gyt.array() * xt.array() * es + g_log_det;
    Eigen::ArrayXXd graw = gs * (1.0 - (cache.s.array() / kLogScaleClamp).square());
    Eigen::MatrixXd gout(z.rows(), 2 * t);
    gout.leftCols(t) = graw.matrix();
    gout.rightCols(t) = gyt;

    auto* gp = &grads[li * CouplingLayer::kParamCount];
    gp[CouplingLayer::W3] = gout.transpose() * cache.h2;
    gp[CouplingLayer::b3] = gout.colwise().sum().transpose();
    Eigen::MatrixXd ga2 = ((gout * p[CouplingLayer::W3]).array() * (1.0 - cache.h2.array().square())).matrix();
    gp[CouplingLayer::W2] = ga2.transpose() * cache.h1;
    gp[CouplingLayer::b2] = ga2.colwise().sum().transpose();
    Eigen::MatrixXd ga1 = ((ga2 * p[CouplingLayer::W2]).array() * (1.0 - cache.h1.array().square())).matrix();
    gp[CouplingLayer::W1] = ga1.transpose() * c;
    gp[CouplingLayer::b1] = ga1.colwise().sum().transpose();
    Eigen::MatrixXd gc = detail::take_columns(g, L.cond) + ga1 * p[CouplingLayer::W1];

    Eigen::MatrixXd gx(g.rows(), g.cols());
    detail::put_columns(gx, L.cond, gc);
    detail::put_columns(gx, L.trans, gxt);
    g = std::move(gx);
  }
  return {loss, std::move(grads)};
}

inline std::pair<double, std::vector<double>> FlowModel::loss_and_gradient(const Eigen::MatrixXd& points) const {
  if (points.cols() != mean_.size()) throw Error("flow loss: point has the wrong dimension");
  Eigen::MatrixXd z = (points.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  auto [loss, grads] = loss_and_gradient_std(z);
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& gm : grads)
    for (Eigen::Index i = 0; i < gm.rows(); ++i)
      for (Eigen::Index j = 0; j < gm.cols(); ++j) flat.push_back(gm(i, j));
  return {loss - standardization_log_det(), std::move(flat)};
}

namespace detail {

inline double min_pairwise_distance(const Eigen::MatrixXd& z) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) best = std::min(best, (z.row(i) - z.row(j)).norm());
  return best;
}

}  // namespace detail

/// Standardizes the rows of `points` and maximizes their log-likelihood by
/// full-batch AdaM. The returned parameters are the best iterate seen, so
/// the training likelihood never ends below that of the identity flow.
inline FlowModel fit_flow(const Eigen::MatrixXd& points, const FlowConfig& config) {
  config.validate();
  if (points.rows() < 8) throw Error("fit_flow: need at least 8 points, got " + std::to_string(points.rows()));
  if (points.cols() < 2) throw Error("fit_flow: need dimension >= 2");
  if (!points.allFinite()) throw Error("fit_flow: non-finite training point");

  FlowModel model(static_cast<std::size_t>(points.cols()), config);
  const auto n = static_cast<double>(points.rows());
  Eigen::VectorXd mean = points.colwise().mean().transpose();
  Eigen::VectorXd scale(points.cols());
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    const double sd = std::sqrt((points.col(k).array() - mean(k)).square().sum() / n);
    scale(k) = sd > 1e-12 ? sd : 1.0;
  }
  model.set_standardization(mean, scale);

  const Eigen::MatrixXd z = (points.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  const bool perturb = config.perturbation > 0.0 && detail::min_pairwise_distance(z) < kDuplicateThreshold;
  std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::MatrixXd*> params;
  for (auto& L : model.layers_)
    for (auto& p : L.params) params.push_back(&p);
  AdamState<Eigen::MatrixXd> adam;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;

  auto best_layers = model.layers_;
  double best_loss = model.loss_and_gradient_std(z).first;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd batch = z;
    if (perturb) {
      for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] += config.perturbation * normal(noise_rng);
    }
    auto [loss, grads] = model.loss_and_gradient_std(batch);
    if (!std::isfinite(loss)) throw Error("fit_flow: non-finite loss at iteration " + std::to_string(it));
    if (!perturb && loss < best_loss) {
      best_loss = loss;
      best_layers = model.layers_;
    }
    std::vector<const Eigen::MatrixXd*> gptr;
    for (const auto& gm : grads) gptr.push_back(&gm);
    adam.step(params, gptr, adam_cfg);
  }
  const double final_loss = model.loss_and_gradient_std(z).first;
  if (!std::isfinite(final_loss)) throw Error("fit_flow: non-finite loss at iteration " + std::to_string(config.iterations));
  if (final_loss > best_loss) model.layers_ = std::move(best_layers);
  return model;
}

}  // namespace mvtl
