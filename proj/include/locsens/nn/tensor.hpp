#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace locsens::nn {

using Index = Eigen::Index;

/// Row-major 2-D tensor. Rows are samples, columns are features; a vector is
/// a single row.
template <typename Scalar>
using Tensor =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable tensor together with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols)
      : name(std::move(n)),
        value(Tensor<Scalar>::Zero(rows, cols)),
        grad(Tensor<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

/// Converts between scalar types; exact when widening.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  return x.template cast<To>();
}

using Rng = std::mt19937_64;

}  // namespace locsens::nn
