#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

struct GradCheckOptions {
  double step = 1e-5;        // central-difference half width
  double tolerance = 1e-4;   // max relative error accepted
  Index max_entries = 0;     // per parameter; 0 checks every entry
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double global_max = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients with central finite differences.
///
/// `loss()` evaluates the scalar objective at the current parameter values.
/// `analytic()` must leave dloss/dparam in every `grad` (it is responsible for
/// zeroing first). Parameters are restored exactly after each probe. When
/// `max_entries` is set, entries are visited with an even stride so that
/// every region of a large tensor is sampled.
template <class LossFn, class GradFn>
GradCheckReport gradcheck(std::span<Parameter<double>* const> params, LossFn&& loss,
                          GradFn&& analytic, const GradCheckOptions& options = {}) {
  analytic();
  std::vector<Tensor<double>> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(p->grad);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    GradCheckEntry entry{p.name, 0.0, 0};
    const Index n = p.value.size();
    Index stride = 1;
    if (options.max_entries > 0 && n > options.max_entries) {
      stride = (n + options.max_entries - 1) / options.max_entries;
    }
    for (Index k = 0; k < n; k += stride) {
      double& slot = p.value.data()[k];
      const double saved = slot;
      slot = saved + h;
      const double up = loss();
      slot = saved - h;
      const double down = loss();
      slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      entry.max_rel_error =
          std::max(entry.max_rel_error, relative_error(grads[i].data()[k], numeric));
      ++entry.checked;
    }
    report.global_max = std::max(report.global_max, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  report.passed = report.global_max <= options.tolerance;
  return report;
}

}  // namespace locsens::nn
