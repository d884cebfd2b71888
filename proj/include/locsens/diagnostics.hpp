#pragma once

// Finite-difference checks of every differentiable piece: layers, losses and
// the full triplet scorer, all in double precision.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "locsens/baselines.hpp"
#include "locsens/nn/activations.hpp"
#include "locsens/nn/dense.hpp"
#include "locsens/nn/gradcheck.hpp"
#include "locsens/nn/group_norm.hpp"
#include "locsens/scorer/model.hpp"

namespace locsens::diagnostics {

using nn::Index;
using nn::Parameter;
using nn::Tensor;
using T = Tensor<double>;

struct GradCheckCase {
  std::string name;
  nn::GradCheckReport report;
};

namespace detail {

inline T gaussian(Index rows, Index cols, nn::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  T x(rows, cols);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

/// Gaussian entries pushed at least `gap` away from zero, so ReLU kinks are
/// never straddled by a probe.
inline T off_zero(Index rows, Index cols, nn::Rng& rng, double gap = 0.05) {
  T x = gaussian(rows, cols, rng);
  for (Index i = 0; i < x.size(); ++i) {
    double& v = x.data()[i];
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return x;
}

inline double weighted_sum(const T& y, const T& c) { return (y.array() * c.array()).sum(); }

inline bool clear_of(const T& x, double gap) { return x.size() == 0 || x.cwiseAbs().minCoeff() >= gap; }

/// True when no ReLU input of the scorer lies within `gap` of zero.
inline bool off_kink(const scorer::LocSensModel<double>& model, const T& r, const T& v, const T& g,
                     const std::vector<double>& alpha, double gap) {
  try {
    typename scorer::LocSensModel<double>::Cache cache;
    model.forward(r, v, g, alpha, &cache);
    if (!clear_of(cache.img_pre, gap) || !clear_of(cache.tag_pre, gap) || !clear_of(cache.loc_pre, gap)) {
      return false;
    }
    for (const auto& n : cache.trunk_norm) {
      if (!clear_of(n, gap)) return false;
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace detail

/// Runs every check; `options.tolerance` decides pass/fail per case.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed,
                                                      const nn::GradCheckOptions& options = {}) {
  using detail::gaussian;
  using detail::weighted_sum;
  nn::Rng rng(seed);
  std::vector<GradCheckCase> out;
  auto check = [&](std::string name, std::vector<Parameter<double>*> params, auto loss, auto grad) {
    out.push_back({std::move(name), nn::gradcheck(params, loss, grad, options)});
  };

  {
    nn::Dense<double> dense("dense", 5, 4);
    dense.init_kaiming(rng);
    Parameter<double> x("input", 3, 5);
    x.value = gaussian(3, 5, rng);
    const T c = gaussian(3, 4, rng);
    auto params = dense.parameters();
    params.push_back(&x);
    check("dense", params, [&] { return weighted_sum(dense.forward(x.value), c); },
          [&] {
            nn::zero_grads(params);
            x.grad = dense.backward(x.value, c);
          });
  }
  {
    Parameter<double> x("input", 4, 6);
    x.value = detail::off_zero(4, 6, rng);
    const T c = gaussian(4, 6, rng);
    check("relu", {&x}, [&] { return weighted_sum(nn::relu(x.value), c); },
          [&] { x.grad = nn::relu_backward(x.value, c); });
  }
  {
    Parameter<double> x("input", 4, 6);
    x.value = gaussian(4, 6, rng);
    const T c = gaussian(4, 6, rng);
    check("l2_normalize", {&x}, [&] { return weighted_sum(nn::l2_normalize(x.value).y, c); },
          [&] { x.grad = nn::l2_normalize_backward(nn::l2_normalize(x.value), c); });
  }
  {
    nn::GroupNorm<double> gn("group_norm", 8, 2);
    gn.gamma().value = gaussian(1, 8, rng);
    gn.beta().value = gaussian(1, 8, rng);
    Parameter<double> x("input", 3, 8);
    x.value = gaussian(3, 8, rng);
    const T c = gaussian(3, 8, rng);
    auto params = gn.parameters();
    params.push_back(&x);
    check("group_norm", params, [&] { return weighted_sum(gn.forward(x.value), c); },
          [&] {
            nn::zero_grads(params);
            typename nn::GroupNorm<double>::Cache cache;
            gn.forward(x.value, &cache);
            x.grad = gn.backward(cache, c);
          });
  }
  {
    Parameter<double> z("logits", 3, 7);
    z.value = gaussian(3, 7, rng, 2.0);
    T y = T::Zero(3, 7);
    y(0, 1) = y(0, 4) = y(1, 0) = y(2, 6) = y(2, 2) = 1.0;
    check("mlc_loss", {&z}, [&] { return baselines::mlc_loss(z.value, y).value; },
          [&] { z.grad = baselines::mlc_loss(z.value, y).grad; });
  }
  {
    Parameter<double> z("logits", 3, 7);
    z.value = gaussian(3, 7, rng, 2.0);
    const std::vector<data::TagId> y = {2, 0, 6};
    check("mcc_loss", {&z}, [&] { return baselines::mcc_loss(z.value, y).value; },
          [&] { z.grad = baselines::mcc_loss(z.value, y).grad; });
  }
  {
    Parameter<double> f("output", 3, 5);
    f.value = gaussian(3, 5, rng);
    const T t = gaussian(3, 5, rng);
    check("her_loss", {&f}, [&] { return baselines::her_loss(f.value, t).value; },
          [&] { f.grad = baselines::her_loss(f.value, t).grad; });
  }
  {
    // Scores chosen so every hinge is active with room to spare.
    Parameter<double> s("scores", 1, 4);
    s.value << 0.3, 0.35, 0.25, 0.5;
    auto loss = [&] {
      double l = 0.0;
      for (Index j = 1; j < 4; ++j) l += scorer::margin_ranking_loss(s.value(0, 0), s.value(0, j), 0.1).value;
      return l / 3.0;
    };
    check("margin_loss", {&s}, loss, [&] {
      s.grad.setZero();
      for (Index j = 1; j < 4; ++j) {
        const auto m = scorer::margin_ranking_loss(s.value(0, 0), s.value(0, j), 0.1);
        s.grad(0, 0) += m.d_pos / 3.0;
        s.grad(0, j) += m.d_neg / 3.0;
      }
    });
  }
  {
    scorer::Architecture arch;
    arch.embed_dim = 6;
    arch.proj_dim = 16;
    arch.trunk = {32, 32, 32, 32, 16};
    arch.gn_groups = 4;  // 8 channels per group; tiny groups make the probe ill-conditioned
    scorer::LocSensModel<double> model(arch);
    const Index b = 5;
    const T r = nn::l2_normalize<double>(gaussian(b, 6, rng)).y;
    const T v = nn::l2_normalize<double>(gaussian(b, 6, rng)).y;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    T g(b, 2);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = u(rng);
    const std::vector<double> alpha = {1.0, 0.7, 1.0, 0.0, 1.0};
    // Redraw the weights until every ReLU input sits clear of its kink, as
    // in the standalone relu case; a straddled kink makes the central
    // difference meaningless.
    for (int attempt = 0;; ++attempt) {
      model.init(rng);
      if (detail::off_kink(model, r, v, g, alpha, 0.01)) break;
      if (attempt == 100000) throw Error("gradcheck: no off-kink initialization found");
    }
    // Central differences resolve a derivative only down to about
    // ulp(score) / h. A shrunken head keeps scores, and with them that
    // rounding noise, small next to the gradients being checked. The hinge
    // below sees score differences only, so the head bias and any shift
    // shared by all rows have an exactly zero gradient that must read as
    // zero numerically too.
    for (auto* p : model.parameters()) {
      if (p->name.rfind("head.", 0) == 0) p->value *= 1e-3;
    }
    const T c = gaussian(b, 1, rng);
    auto params = model.parameters();
    check("locsens_forward", params, [&] { return weighted_sum(model.forward(r, v, g, alpha), c); },
          [&] {
            nn::zero_grads(params);
            typename scorer::LocSensModel<double>::Cache cache;
            model.forward(r, v, g, alpha, &cache);
            model.backward(cache, c);
          });

    // Row 0 is the positive, rows 1.. its negatives. The margin sits just
    // above the widest score gap so every hinge is active.
    const T s0 = model.forward(r, v, g, alpha);
    double margin = 0.0;
    for (Index j = 1; j < b; ++j) margin = std::max(margin, s0(0, 0) - s0(j, 0));
    margin += 1e-3;
    auto ranking_loss = [&](T* ds) {
      const T s = model.forward(r, v, g, alpha);
      double l = 0.0;
      if (ds) ds->setZero(b, 1);
      for (Index j = 1; j < b; ++j) {
        const auto m = scorer::margin_ranking_loss(s(0, 0), s(j, 0), margin);
        l += m.value / static_cast<double>(b - 1);
        if (ds) {
          (*ds)(0, 0) += m.d_pos / static_cast<double>(b - 1);
          (*ds)(j, 0) += m.d_neg / static_cast<double>(b - 1);
        }
      }
      return l;
    };
    check("locsens_ranking_loss", params, [&] { return ranking_loss(nullptr); },
          [&] {
            nn::zero_grads(params);
            T ds;
            ranking_loss(&ds);
            typename scorer::LocSensModel<double>::Cache cache;
            model.forward(r, v, g, alpha, &cache);
            model.backward(cache, ds);
          });
  }
  return out;
}

}  // namespace locsens::diagnostics
