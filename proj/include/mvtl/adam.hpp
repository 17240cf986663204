#pragma once

#include <mvtl/error.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mvtl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("AdaM learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw Error("AdaM betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw Error("AdaM epsilon must be positive");
  }
};

/// First/second moment estimates for a fixed list of parameter tensors.
template <typename Matrix>
class AdamState {
 public:
  long step_count() const { return step_; }
  void reset() {
    m_.clear();
    v_.clear();
    step_ = 0;
  }

  /// Bias-corrected AdaM update of `params` (descending along `grads`).
  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw Error("AdaM: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Matrix* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    if (m_.size() != params.size()) throw Error("AdaM: state does not match parameters");
    ++step_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = *grads[i];
      if (g.rows() != m_[i].rows() || g.cols() != m_[i].cols()) throw Error("AdaM: gradient shape mismatch");
      m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g;
      v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      auto m_hat = m_[i].array() / c1;
      auto v_hat = v_[i].array() / c2;
      params[i]->array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
  }

 private:
  std::vector<Matrix> m_, v_;
  long step_ = 0;
};

}  // namespace mvtl
