#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "graphnas/tensor.hpp"

namespace graphnas {

/// Rescales the gradients of `params` so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
inline double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  double total = 0.0;
  for (const Tensor& p : params)
    for (double g : p.node()->grad) total += g * g;
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const Tensor& p : params)
      for (double& g : p.node()->grad) g *= scale;
  }
  return norm;
}

/// Gradient descent with heavy-ball momentum (momentum 0 gives plain descent).
class MomentumSgd {
 public:
  MomentumSgd(std::vector<Tensor> params, double lr, double momentum)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      const std::vector<double> g = params_[i].grad();
      auto x = params_[i].mutable_data();
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < x.size(); ++k) {
        v[k] = momentum_ * v[k] + g[k];
        x[k] -= lr_ * v[k];
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      const std::vector<double> g = params_[i].grad();
      auto x = params_[i].mutable_data();
      for (std::size_t k = 0; k < x.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
        x[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + epsilon_);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, epsilon_;
  long long t_ = 0;
};

}  // namespace graphnas
