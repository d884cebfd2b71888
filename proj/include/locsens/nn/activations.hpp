#pragma once

#include <cmath>

#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

/// Gradient mask is 1 where x > 0 and 0 elsewhere, including x == 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
  return (x.array() > Scalar(0)).select(dy, Scalar(0));
}

/// Row-wise L2 normalization. Keeps the norms for the backward pass.
template <typename Scalar>
struct L2Normalized {
  Tensor<Scalar> y;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms;
};

/// Normalizes every row to unit length. A zero row has no direction and is
/// rejected.
template <typename Scalar>
L2Normalized<Scalar> l2_normalize(const Tensor<Scalar>& x) {
  L2Normalized<Scalar> out;
  out.norms = x.rowwise().norm();
  out.y.resize(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar n = out.norms(r);
    if (!(n > Scalar(0)) || !std::isfinite(static_cast<double>(n))) {
      throw ValidationError("l2_normalize: row " + std::to_string(r) +
                            " has zero or non-finite norm");
    }
    out.y.row(r) = x.row(r) / n;
  }
  return out;
}

/// dx = (dy - y (y . dy)) / ||x||
template <typename Scalar>
Tensor<Scalar> l2_normalize_backward(const L2Normalized<Scalar>& fwd,
                                     const Tensor<Scalar>& dy) {
  Tensor<Scalar> dx(dy.rows(), dy.cols());
  for (Index r = 0; r < dy.rows(); ++r) {
    const Scalar proj = fwd.y.row(r).dot(dy.row(r));
    dx.row(r) = (dy.row(r) - proj * fwd.y.row(r)) / fwd.norms(r);
  }
  return dx;
}

}  // namespace locsens::nn
