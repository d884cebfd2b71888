#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and bound to the parameter order given then.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }

  void step(const ParamList<Scalar>& params) {
    if (first_.empty()) {
      for (auto* p : params) {
        first_.push_back(Tensor<Scalar>::Zero(p->value.rows(), p->value.cols()));
        second_.push_back(Tensor<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (first_.size() != params.size()) {
      throw ValidationError("adam: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = *params[i];
      if (p.grad.rows() != first_[i].rows() || p.grad.cols() != first_[i].cols()) {
        throw ValidationError("adam: gradient shape mismatch for " + p.name);
      }
      if (!p.grad.allFinite()) {
        throw DivergenceError("adam: non-finite gradient in " + p.name);
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.lr);
    const auto eps = static_cast<Scalar>(config_.eps);
    const auto inv_c1 = static_cast<Scalar>(1.0 / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      auto m = first_[i].array();
      auto v = second_[i].array();
      const auto g = p.grad.array();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      p.value.array() -= lr * (m * inv_c1) / ((v * inv_c2).sqrt() + eps);
    }
  }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Tensor<Scalar>> first_;
  std::vector<Tensor<Scalar>> second_;
};

/// Global L2 norm over every gradient in `params`.
template <typename Scalar>
double grad_norm(const ParamList<Scalar>& params) {
  double sq = 0.0;
  for (auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const ParamList<Scalar>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

}  // namespace locsens::nn
