#pragma once

// Adam with per-parameter base learning rates, cosine decay and an optional
// update mask (used by the face-only stage).

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace gsav {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const Eigen::VectorXd& base_lr, AdamConfig cfg = {})
      : base_lr_(base_lr),
        cfg_(cfg),
        m_(Eigen::VectorXd::Zero(base_lr.size())),
        v_(Eigen::VectorXd::Zero(base_lr.size())) {}

  // Cosine decay from 1 at step 0 to 0 at `total_steps`.
  static double cosine_decay(std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 0) return 1.0;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return 0.5 * (1.0 + std::cos(M_PI * t));
  }

  // One update with learning-rate multiplier `lr_scale`; entries where
  // `mask` is zero are left untouched (moments included).
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr_scale = 1.0,
            const Eigen::VectorXd* mask = nullptr) {
    if (params.size() != base_lr_.size() || grads.size() != base_lr_.size())
      throw std::invalid_argument("adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (mask && (*mask)[i] == 0.0) continue;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1, vhat = v_[i] / bc2;
      params[i] -= lr_scale * base_lr_[i] * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

  std::int64_t steps_taken() const { return t_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  Eigen::VectorXd base_lr_;
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace gsav
