#pragma once

// Layers with hand-written backward passes. Activations are row-major
// matrices with one sample per row; convolutional layers read a row as C
// channels of length L laid out channel-major (index c * L + t).

#include <mvtl/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mvtl::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode { train, eval };

/// A trainable tensor and its gradient, owned by a layer.
struct Param {
  std::string name;
  Mat* value = nullptr;
  Mat* grad = nullptr;
};

/// Non-trainable state that still travels with the weights.
struct Buffer {
  std::string name;
  Mat* value = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  /// Caches whatever backward() needs.
  virtual Mat forward(const Mat& x, Mode mode, std::mt19937_64& rng) = 0;
  /// Returns dL/dx and overwrites the parameter gradients.
  virtual Mat backward(const Mat& grad_out) = 0;
  virtual std::vector<Param> params() { return {}; }
  virtual std::vector<Buffer> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

namespace detail {

inline Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace detail

/// y = x W^T + b
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight_(detail::uniform_matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                                       std::sqrt(6.0 / static_cast<double>(in)), rng)),
        bias_(Mat::Zero(1, static_cast<Eigen::Index>(out))),
        grad_weight_(Mat::Zero(weight_.rows(), weight_.cols())),
        grad_bias_(Mat::Zero(1, bias_.cols())) {}

  std::string kind() const override { return "dense"; }

  Mat forward(const Mat& x, Mode, std::mt19937_64&) override {
    if (x.cols() != weight_.cols()) throw Error("dense layer expects " + std::to_string(weight_.cols()) + " inputs");
    input_ = x;
    Mat y = x * weight_.transpose();
    y.rowwise() += bias_.row(0);
    return y;
  }

  Mat backward(const Mat& g) override {
    grad_weight_ = g.transpose() * input_;
    grad_bias_ = g.colwise().sum();
    return g * weight_;
  }

  std::vector<Param> params() override { return {{"weight", &weight_, &grad_weight_}, {"bias", &bias_, &grad_bias_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  Mat& weight() { return weight_; }
  Mat& bias() { return bias_; }

 private:
  Mat weight_, bias_, grad_weight_, grad_bias_, input_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Mat forward(const Mat& x, Mode, std::mt19937_64&) override {
    input_ = x;
    return x.cwiseMax(0.0);
  }
  Mat backward(const Mat& g) override { return (input_.array() > 0.0).select(g, 0.0); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Mat input_;
};

/// 1-D convolution (cross-correlation), stride 1, zero "same" padding:
/// floor((k-1)/2) zeros on the left, the rest on the right.
class Conv1D final : public Layer {
 public:
  Conv1D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t length, std::mt19937_64& rng)
      : in_(static_cast<Eigen::Index>(in_channels)),
        out_(static_cast<Eigen::Index>(out_channels)),
        k_(static_cast<Eigen::Index>(kernel)),
        len_(static_cast<Eigen::Index>(length)),
        weight_(detail::uniform_matrix(out_, in_ * k_, std::sqrt(6.0 / static_cast<double>(in_ * k_)), rng)),
        bias_(Mat::Zero(1, out_)),
        grad_weight_(Mat::Zero(weight_.rows(), weight_.cols())),
        grad_bias_(Mat::Zero(1, out_)) {
    if (kernel == 0 || kernel > length) throw Error("conv kernel size must lie in [1, input length]");
  }

  std::string kind() const override { return "conv1d"; }

  Mat forward(const Mat& x, Mode, std::mt19937_64&) override {
    if (x.cols() != in_ * len_) throw Error("conv1d expects " + std::to_string(in_ * len_) + " inputs per sample");
    const Eigen::Index batch = x.rows();
    const Eigen::Index pad = (k_ - 1) / 2;
    cols_ = Eigen::MatrixXd::Zero(in_ * k_, batch * len_);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index c = 0; c < in_; ++c)
        for (Eigen::Index j = 0; j < k_; ++j)
          for (Eigen::Index t = 0; t < len_; ++t) {
            const Eigen::Index src = t + j - pad;
            if (src >= 0 && src < len_) cols_(c * k_ + j, b * len_ + t) = x(b, c * len_ + src);
          }
    Eigen::MatrixXd y_all = weight_ * cols_;
    Mat y(batch, out_ * len_);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index o = 0; o < out_; ++o)
        for (Eigen::Index t = 0; t < len_; ++t) y(b, o * len_ + t) = y_all(o, b * len_ + t) + bias_(0, o);
    return y;
  }

  Mat backward(const Mat& g) override {
    const Eigen::Index batch = g.rows();
    const Eigen::Index pad = (k_ - 1) / 2;
    Eigen::MatrixXd g_all(out_, batch * len_);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index o = 0; o < out_; ++o)
        for (Eigen::Index t = 0; t < len_; ++t) g_all(o, b * len_ + t) = g(b, o * len_ + t);
    grad_weight_ = g_all * cols_.transpose();
    grad_bias_ = g_all.rowwise().sum().transpose();
    Eigen::MatrixXd g_cols = weight_.transpose() * g_all;
    Mat dx = Mat::Zero(batch, in_ * len_);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index c = 0; c < in_; ++c)
        for (Eigen::Index j = 0; j < k_; ++j)
          for (Eigen::Index t = 0; t < len_; ++t) {
            const Eigen::Index src = t + j - pad;
            if (src >= 0 && src < len_) dx(b, c * len_ + src) += g_cols(c * k_ + j, b * len_ + t);
          }
    return dx;
  }

  std::vector<Param> params() override { return {{"weight", &weight_, &grad_weight_}, {"bias", &bias_, &grad_bias_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1D>(*this); }

  Mat& weight() { return weight_; }
  Mat& bias() { return bias_; }

 private:
  Eigen::Index in_, out_, k_, len_;
  Mat weight_, bias_, grad_weight_, grad_bias_;
  Eigen::MatrixXd cols_;
};

/// Per-channel batch normalization over (batch, time). Running statistics
/// are exponential moving averages with momentum 0.9.
class BatchNorm1D final : public Layer {
 public:
  static constexpr double kMomentum = 0.9;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm1D(std::size_t channels, std::size_t length)
      : ch_(static_cast<Eigen::Index>(channels)),
        len_(static_cast<Eigen::Index>(length)),
        gamma_(Mat::Ones(1, ch_)),
        beta_(Mat::Zero(1, ch_)),
        grad_gamma_(Mat::Zero(1, ch_)),
        grad_beta_(Mat::Zero(1, ch_)),
        running_mean_(Mat::Zero(1, ch_)),
        running_var_(Mat::Ones(1, ch_)) {}

  std::string kind() const override { return "batchnorm"; }

  Mat forward(const Mat& x, Mode mode, std::mt19937_64&) override {
    if (x.cols() != ch_ * len_) throw Error("batchnorm expects " + std::to_string(ch_ * len_) + " inputs per sample");
    const Eigen::Index batch = x.rows();
    mode_ = mode;
    mean_.setZero(ch_);
    inv_std_.resize(ch_);
    if (mode == Mode::train) {
      const double count = static_cast<double>(batch * len_);
      Eigen::VectorXd var = Eigen::VectorXd::Zero(ch_);
      for (Eigen::Index c = 0; c < ch_; ++c) {
        mean_(c) = x.middleCols(c * len_, len_).sum() / count;
        var(c) = (x.middleCols(c * len_, len_).array() - mean_(c)).square().sum() / count;
        inv_std_(c) = 1.0 / std::sqrt(var(c) + kEpsilon);
        const double unbiased = count > 1.0 ? var(c) * count / (count - 1.0) : var(c);
        running_mean_(0, c) = kMomentum * running_mean_(0, c) + (1.0 - kMomentum) * mean_(c);
        running_var_(0, c) = kMomentum * running_var_(0, c) + (1.0 - kMomentum) * unbiased;
      }
    } else {
      for (Eigen::Index c = 0; c < ch_; ++c) {
        mean_(c) = running_mean_(0, c);
        inv_std_(c) = 1.0 / std::sqrt(running_var_(0, c) + kEpsilon);
      }
    }
    xhat_.resize(batch, ch_ * len_);
    Mat y(batch, ch_ * len_);
    for (Eigen::Index c = 0; c < ch_; ++c) {
      xhat_.middleCols(c * len_, len_) = (x.middleCols(c * len_, len_).array() - mean_(c)) * inv_std_(c);
      y.middleCols(c * len_, len_) = xhat_.middleCols(c * len_, len_).array() * gamma_(0, c) + beta_(0, c);
    }
    return y;
  }

  Mat backward(const Mat& g) override {
    const Eigen::Index batch = g.rows();
    const double count = static_cast<double>(batch * len_);
    Mat dx(batch, ch_ * len_);
    for (Eigen::Index c = 0; c < ch_; ++c) {
      auto gc = g.middleCols(c * len_, len_).array();
      auto xh = xhat_.middleCols(c * len_, len_).array();
      grad_gamma_(0, c) = (gc * xh).sum();
      grad_beta_(0, c) = gc.sum();
      if (mode_ == Mode::train) {
        const double sum_g = gc.sum();
        const double sum_gx = (gc * xh).sum();
        dx.middleCols(c * len_, len_) =
            (gamma_(0, c) * inv_std_(c) / count) * (count * gc - sum_g - xh * sum_gx);
      } else {
        dx.middleCols(c * len_, len_) = gc * (gamma_(0, c) * inv_std_(c));
      }
    }
    return dx;
  }

  std::vector<Param> params() override { return {{"gamma", &gamma_, &grad_gamma_}, {"beta", &beta_, &grad_beta_}}; }
  std::vector<Buffer> buffers() override { return {{"running_mean", &running_mean_}, {"running_var", &running_var_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm1D>(*this); }

  Mat& gamma() { return gamma_; }
  Mat& beta() { return beta_; }
  Mat& running_mean() { return running_mean_; }
  Mat& running_var() { return running_var_; }

 private:
  Eigen::Index ch_, len_;
  Mat gamma_, beta_, grad_gamma_, grad_beta_, running_mean_, running_var_;
  Mode mode_ = Mode::eval;
  Eigen::VectorXd mean_, inv_std_;
  Mat xhat_;
};

/// Inverted dropout: kept units are scaled by 1/(1-p) in training, and the
/// layer is the identity in eval mode.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
  }

  std::string kind() const override { return "dropout"; }

  Mat forward(const Mat& x, Mode mode, std::mt19937_64& rng) override {
    if (mode == Mode::eval || rate_ == 0.0) {
      mask_ = Mat::Ones(x.rows(), x.cols());
      return x;
    }
    std::bernoulli_distribution keep(1.0 - rate_);
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = keep(rng) ? 1.0 / (1.0 - rate_) : 0.0;
    return x.cwiseProduct(mask_);
  }

  Mat backward(const Mat& g) override { return g.cwiseProduct(mask_); }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

  /// Fixes the mask used by the next backward() (for gradient checks).
  void set_mask(Mat mask) { mask_ = std::move(mask); }
  const Mat& mask() const { return mask_; }

 private:
  double rate_;
  Mat mask_;
};

/// Mean over time per channel: (C * L) -> C.
class GlobalAveragePool final : public Layer {
 public:
  GlobalAveragePool(std::size_t channels, std::size_t length)
      : ch_(static_cast<Eigen::Index>(channels)), len_(static_cast<Eigen::Index>(length)) {}

  std::string kind() const override { return "global_average_pool"; }

  Mat forward(const Mat& x, Mode, std::mt19937_64&) override {
    if (x.cols() != ch_ * len_) throw Error("pooling expects " + std::to_string(ch_ * len_) + " inputs per sample");
    Mat y(x.rows(), ch_);
    for (Eigen::Index c = 0; c < ch_; ++c) y.col(c) = x.middleCols(c * len_, len_).rowwise().mean();
    return y;
  }

  Mat backward(const Mat& g) override {
    Mat dx(g.rows(), ch_ * len_);
    for (Eigen::Index c = 0; c < ch_; ++c) dx.middleCols(c * len_, len_) = (g.col(c) / static_cast<double>(len_)).replicate(1, len_);
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAveragePool>(*this); }

 private:
  Eigen::Index ch_, len_;
};

}  // namespace mvtl::nn
