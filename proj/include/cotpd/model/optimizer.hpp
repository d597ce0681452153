#pragma once

#include <cmath>
#include <vector>

#include "cotpd/model/autodiff.hpp"
#include "cotpd/model/encoder.hpp"

namespace cotpd::model {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<NamedParameter> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
      m_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
      v_.push_back(ad::Matrix::Zero(p.var.rows(), p.var.cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) sq += p.var.grad().squaredNorm();
    return std::sqrt(sq);
  }

  /// Applies one update from the accumulated gradients, scaled by `grad_scale`.
  void step(double grad_scale = 1.0) {
    ++t_;
    double scale = grad_scale;
    if (opt_.clip_norm > 0) {
      double norm = grad_norm() * grad_scale;
      if (norm > opt_.clip_norm) scale *= opt_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].var.mutable_value();
      const ad::Matrix g = params_[i].var.grad() * scale;
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      w *= 1.0 - opt_.learning_rate * opt_.weight_decay;
      w.array() -= opt_.learning_rate * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
  }

  void set_learning_rate(double lr) { opt_.learning_rate = lr; }

 private:
  std::vector<NamedParameter> params_;
  AdamWOptions opt_;
  std::vector<ad::Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace cotpd::model
