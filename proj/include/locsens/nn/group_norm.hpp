#pragma once

#include <cmath>
#include <string>

#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

/// 32 groups when the channel count allows it, otherwise the largest divisor
/// of `channels` not exceeding 32.
inline Index default_group_count(Index channels) {
  if (channels <= 0) throw ValidationError("group norm: channels must be positive");
  for (Index g = std::min<Index>(32, channels); g >= 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

/// Group normalization over the feature axis. Statistics are computed per row
/// (sample) and per channel group, so rows never influence each other.
template <typename Scalar>
class GroupNorm {
 public:
  struct Cache {
    Tensor<Scalar> xhat;  // normalized input, before affine
    Tensor<Scalar> rstd;  // [rows x groups]
  };

  GroupNorm() = default;
  GroupNorm(const std::string& name, Index channels, Index num_groups,
            double eps = 1e-5)
      : groups_(num_groups),
        eps_(eps),
        gamma_(name + ".gamma", 1, channels),
        beta_(name + ".beta", 1, channels) {
    if (num_groups <= 0 || channels % num_groups != 0) {
      throw ValidationError("group norm " + name + ": " + std::to_string(channels) +
                            " channels not divisible into " +
                            std::to_string(num_groups) + " groups");
    }
    if (!(eps > 0.0)) throw ValidationError("group norm " + name + ": eps must be > 0");
    gamma_.value.setOnes();
  }

  Index channels() const { return gamma_.value.cols(); }
  Index groups() const { return groups_; }
  double eps() const { return eps_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache* cache = nullptr) const {
    if (x.cols() != channels()) {
      throw ValidationError("group norm " + gamma_.name + ": expected " +
                            std::to_string(channels()) + " channels, got " +
                            std::to_string(x.cols()));
    }
    const Index rows = x.rows();
    const Index size = channels() / groups_;
    Tensor<Scalar> xhat(rows, channels());
    Tensor<Scalar> rstd(rows, groups_);
    for (Index r = 0; r < rows; ++r) {
      for (Index g = 0; g < groups_; ++g) {
        auto seg = x.row(r).segment(g * size, size);
        const Scalar mean = seg.mean();
        const Scalar var = (seg.array() - mean).square().mean();
        const Scalar inv = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps_));
        rstd(r, g) = inv;
        xhat.row(r).segment(g * size, size) = (seg.array() - mean) * inv;
      }
    }
    Tensor<Scalar> y =
        (xhat.array().rowwise() * gamma_.value.row(0).array()).rowwise() +
        beta_.value.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  /// Accumulates d(gamma), d(beta), returns dL/dx.
  Tensor<Scalar> backward(const Cache& cache, const Tensor<Scalar>& dy) {
    const Index rows = dy.rows();
    const Index size = channels() / groups_;
    gamma_.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta_.grad.row(0) += dy.colwise().sum();
    Tensor<Scalar> dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
    Tensor<Scalar> dx(rows, channels());
    const Scalar inv_m = Scalar(1) / static_cast<Scalar>(size);
    for (Index r = 0; r < rows; ++r) {
      for (Index g = 0; g < groups_; ++g) {
        auto dh = dxhat.row(r).segment(g * size, size);
        auto xh = cache.xhat.row(r).segment(g * size, size);
        const Scalar mean_dh = dh.sum() * inv_m;
        const Scalar mean_dh_xh = dh.dot(xh) * inv_m;
        dx.row(r).segment(g * size, size) =
            cache.rstd(r, g) * (dh.array() - mean_dh - xh.array() * mean_dh_xh);
      }
    }
    return dx;
  }

  Parameter<Scalar>& gamma() { return gamma_; }
  Parameter<Scalar>& beta() { return beta_; }
  const Parameter<Scalar>& gamma() const { return gamma_; }
  const Parameter<Scalar>& beta() const { return beta_; }

  ParamList<Scalar> parameters() { return {&gamma_, &beta_}; }

 private:
  Index groups_ = 1;
  double eps_ = 1e-5;
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
};

}  // namespace locsens::nn
