#pragma once

#include <cmath>
#include <string>

#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

/// Fully connected layer y = x W^T + b applied to every row of x.
template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Index in_features, Index out_features)
      : weight_(name + ".weight", out_features, in_features),
        bias_(name + ".bias", 1, out_features) {
    if (in_features <= 0 || out_features <= 0) {
      throw ValidationError("dense layer " + name + ": dimensions must be positive");
    }
  }

  Index in_features() const { return weight_.value.cols(); }
  Index out_features() const { return weight_.value.rows(); }

  /// Kaiming-uniform weights (gain sqrt(2), for layers feeding ReLU) and
  /// bias uniform in +-1/sqrt(fan_in).
  void init_kaiming(Rng& rng) {
    const double fan_in = static_cast<double>(in_features());
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> w(-w_bound, w_bound);
    std::uniform_real_distribution<double> b(-b_bound, b_bound);
    for (Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = static_cast<Scalar>(w(rng));
    }
    for (Index i = 0; i < bias_.value.size(); ++i) {
      bias_.value.data()[i] = static_cast<Scalar>(b(rng));
    }
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const {
    check_input(x);
    Tensor<Scalar> y = x * weight_.value.transpose();
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  /// Accumulates dW and db, returns dL/dx.
  Tensor<Scalar> backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy) {
    check_input(x);
    if (dy.rows() != x.rows() || dy.cols() != out_features()) {
      throw ValidationError("dense " + weight_.name + ": gradient shape mismatch");
    }
    weight_.grad.noalias() += dy.transpose() * x;
    bias_.grad.row(0) += dy.colwise().sum();
    return dy * weight_.value;
  }

  Parameter<Scalar>& weight() { return weight_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& bias() const { return bias_; }

  ParamList<Scalar> parameters() { return {&weight_, &bias_}; }

 private:
  void check_input(const Tensor<Scalar>& x) const {
    if (x.cols() != in_features()) {
      throw ValidationError("dense " + weight_.name + ": expected " +
                            std::to_string(in_features()) + " input features, got " +
                            std::to_string(x.cols()));
    }
  }

  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

}  // namespace locsens::nn
