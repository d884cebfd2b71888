#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "locsens/error.hpp"
#include "locsens/geo.hpp"
#include "locsens/nn/activations.hpp"
#include "locsens/nn/checkpoint.hpp"
#include "locsens/nn/dense.hpp"
#include "locsens/nn/group_norm.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::scorer {

using nn::Index;
using nn::Tensor;

/// Layer widths of the triplet scorer. The defaults are the full-size model;
/// smaller trunks are useful for tests and quick experiments.
struct Architecture {
  Index embed_dim = 300;  // width of the image and tag embeddings fed in
  Index proj_dim = 300;   // width of each modality projection
  std::vector<Index> trunk = {2048, 2048, 2048, 1024, 512};
  Index gn_groups = 0;    // 0 picks default_group_count per layer
  double gn_eps = 1e-5;

  Index fused_dim() const { return 3 * proj_dim; }

  void validate() const {
    if (embed_dim <= 0 || proj_dim <= 0) throw ValidationError("architecture: widths must be positive");
    if (trunk.empty()) throw ValidationError("architecture: trunk needs at least one layer");
    for (Index w : trunk) {
      if (w <= 0) throw ValidationError("architecture: trunk widths must be positive");
      if (gn_groups > 0 && w % gn_groups != 0) {
        throw ValidationError("architecture: trunk width " + std::to_string(w) +
                              " not divisible by " + std::to_string(gn_groups) + " groups");
      }
    }
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Scores (image, tag, location) triplets. The location projection is scaled
/// per row by alpha before fusion; rows with alpha == 0 skip the location
/// branch entirely, so their scores cannot depend on the coordinate.
template <typename Scalar>
class LocSensModel {
 public:
  struct Cache {
    Tensor<Scalar> r, v, g;
    std::vector<Scalar> alpha;
    Tensor<Scalar> img_pre, tag_pre, loc_pre;
    nn::L2Normalized<Scalar> img_n, tag_n, loc_n;
    std::vector<Index> loc_rows;  // rows that took the location branch
    std::vector<Tensor<Scalar>> trunk_in;
    std::vector<Tensor<Scalar>> trunk_norm;  // group norm output, pre-ReLU
    std::vector<typename nn::GroupNorm<Scalar>::Cache> gn;
    Tensor<Scalar> head_in;
  };

  LocSensModel() : LocSensModel(Architecture{}) {}
  explicit LocSensModel(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    img_ = nn::Dense<Scalar>("proj.image", arch_.embed_dim, arch_.proj_dim);
    tag_ = nn::Dense<Scalar>("proj.tag", arch_.embed_dim, arch_.proj_dim);
    loc_ = nn::Dense<Scalar>("proj.location", 2, arch_.proj_dim);
    Index in = arch_.fused_dim();
    for (std::size_t i = 0; i < arch_.trunk.size(); ++i) {
      const Index w = arch_.trunk[i];
      const std::string name = "trunk." + std::to_string(i);
      dense_.emplace_back(name + ".dense", in, w);
      const Index groups = arch_.gn_groups > 0 ? arch_.gn_groups : nn::default_group_count(w);
      norm_.emplace_back(name + ".norm", w, groups, arch_.gn_eps);
      in = w;
    }
    head_ = nn::Dense<Scalar>("head", in, 1);
  }

  const Architecture& architecture() const { return arch_; }

  /// Alpha used by retrieval and tagging. Models trained with the location
  /// silenced keep 0 here; all others use 1.
  double inference_alpha() const { return inference_alpha_; }
  void set_inference_alpha(double a) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("inference alpha must lie in [0,1]");
    inference_alpha_ = a;
  }

  void init(nn::Rng& rng) {
    img_.init_kaiming(rng);
    tag_.init_kaiming(rng);
    loc_.init_kaiming(rng);
    for (auto& d : dense_) d.init_kaiming(rng);
    head_.init_kaiming(rng);
  }

  /// Scores a batch: r, v are [B x embed_dim], g is [B x 2] normalized
  /// coordinates, alpha has one entry per row. Returns [B x 1].
  Tensor<Scalar> forward(const Tensor<Scalar>& r, const Tensor<Scalar>& v, const Tensor<Scalar>& g,
                         const std::vector<Scalar>& alpha, Cache* cache = nullptr) const {
    const Index b = r.rows();
    if (v.rows() != b || g.rows() != b || static_cast<Index>(alpha.size()) != b) {
      throw ValidationError("locsens forward: batch components differ in length");
    }
    if (g.cols() != 2) throw ValidationError("locsens forward: coordinates must have 2 columns");
    const Index p = arch_.proj_dim;

    Tensor<Scalar> img_pre = img_.forward(r);
    Tensor<Scalar> tag_pre = tag_.forward(v);
    auto img_n = nn::l2_normalize<Scalar>(nn::relu(img_pre));
    auto tag_n = nn::l2_normalize<Scalar>(nn::relu(tag_pre));

    std::vector<Index> loc_rows;
    for (Index i = 0; i < b; ++i) {
      if (alpha[static_cast<std::size_t>(i)] != Scalar(0)) loc_rows.push_back(i);
    }
    Tensor<Scalar> loc_pre;
    nn::L2Normalized<Scalar> loc_n;
    if (!loc_rows.empty()) {
      Tensor<Scalar> gs(static_cast<Index>(loc_rows.size()), 2);
      for (std::size_t j = 0; j < loc_rows.size(); ++j) gs.row(static_cast<Index>(j)) = g.row(loc_rows[j]);
      loc_pre = loc_.forward(gs);
      loc_n = nn::l2_normalize<Scalar>(nn::relu(loc_pre));
    }

    Tensor<Scalar> x = Tensor<Scalar>::Zero(b, arch_.fused_dim());
    x.leftCols(p) = img_n.y;
    x.middleCols(p, p) = tag_n.y;
    for (std::size_t j = 0; j < loc_rows.size(); ++j) {
      x.row(loc_rows[j]).rightCols(p) = alpha[static_cast<std::size_t>(loc_rows[j])] * loc_n.y.row(static_cast<Index>(j));
    }

    if (cache) {
      cache->trunk_in.clear();
      cache->trunk_norm.clear();
      cache->gn.assign(dense_.size(), {});
    }
    for (std::size_t l = 0; l < dense_.size(); ++l) {
      Tensor<Scalar> z = dense_[l].forward(x);
      Tensor<Scalar> n = norm_[l].forward(z, cache ? &cache->gn[l] : nullptr);
      Tensor<Scalar> a = nn::relu(n);
      if (cache) {
        cache->trunk_in.push_back(std::move(x));
        cache->trunk_norm.push_back(std::move(n));
      }
      x = std::move(a);
    }
    Tensor<Scalar> s = head_.forward(x);
    if (cache) {
      cache->r = r;
      cache->v = v;
      cache->g = g;
      cache->alpha = alpha;
      cache->img_pre = std::move(img_pre);
      cache->tag_pre = std::move(tag_pre);
      cache->loc_pre = std::move(loc_pre);
      cache->img_n = std::move(img_n);
      cache->tag_n = std::move(tag_n);
      cache->loc_n = std::move(loc_n);
      cache->loc_rows = std::move(loc_rows);
      cache->head_in = std::move(x);
    }
    return s;
  }

  /// Accumulates parameter gradients for dL/dscore = ds ([B x 1]).
  void backward(const Cache& c, const Tensor<Scalar>& ds) {
    const Index p = arch_.proj_dim;
    Tensor<Scalar> da = head_.backward(c.head_in, ds);
    for (std::size_t l = dense_.size(); l-- > 0;) {
      Tensor<Scalar> dn = nn::relu_backward(c.trunk_norm[l], da);
      Tensor<Scalar> dz = norm_[l].backward(c.gn[l], dn);
      da = dense_[l].backward(c.trunk_in[l], dz);
    }
    const Tensor<Scalar> d_img = da.leftCols(p);
    const Tensor<Scalar> d_tag = da.middleCols(p, p);
    img_.backward(c.r, nn::relu_backward(c.img_pre, nn::l2_normalize_backward(c.img_n, d_img)));
    tag_.backward(c.v, nn::relu_backward(c.tag_pre, nn::l2_normalize_backward(c.tag_n, d_tag)));
    if (!c.loc_rows.empty()) {
      const Index m = static_cast<Index>(c.loc_rows.size());
      Tensor<Scalar> d_loc(m, p);
      Tensor<Scalar> gs(m, 2);
      for (Index j = 0; j < m; ++j) {
        const Index row = c.loc_rows[static_cast<std::size_t>(j)];
        d_loc.row(j) = c.alpha[static_cast<std::size_t>(row)] * da.row(row).rightCols(p);
        gs.row(j) = c.g.row(row);
      }
      loc_.backward(gs, nn::relu_backward(c.loc_pre, nn::l2_normalize_backward(c.loc_n, d_loc)));
    }
  }

  nn::ParamList<Scalar> parameters() {
    nn::ParamList<Scalar> out;
    auto add = [&out](nn::ParamList<Scalar> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    add(img_.parameters());
    add(tag_.parameters());
    add(loc_.parameters());
    for (std::size_t l = 0; l < dense_.size(); ++l) {
      add(dense_[l].parameters());
      add(norm_[l].parameters());
    }
    add(head_.parameters());
    return out;
  }

  /// Writes all weights plus a "meta.config" row holding
  /// [embed_dim, proj_dim, gn_groups, gn_eps, inference_alpha, trunk...].
  void save(const std::string& path) {
    Tensor<double> meta(1, static_cast<Index>(5 + arch_.trunk.size()));
    meta(0, 0) = static_cast<double>(arch_.embed_dim);
    meta(0, 1) = static_cast<double>(arch_.proj_dim);
    meta(0, 2) = static_cast<double>(arch_.gn_groups);
    meta(0, 3) = arch_.gn_eps;
    meta(0, 4) = inference_alpha_;
    for (std::size_t i = 0; i < arch_.trunk.size(); ++i) {
      meta(0, static_cast<Index>(5 + i)) = static_cast<double>(arch_.trunk[i]);
    }
    nn::save_checkpoint<Scalar>(path, parameters(), {{"meta.config", meta}});
  }

  static LocSensModel load(const std::string& path) {
    const auto tensors = nn::load_checkpoint(path);
    auto it = tensors.find("meta.config");
    if (it == tensors.end() || it->second.rows() != 1 || it->second.cols() < 6) {
      throw FormatError(path + ": not a LocSens checkpoint (missing meta.config)");
    }
    const auto& m = it->second;
    Architecture arch;
    arch.embed_dim = static_cast<Index>(m(0, 0));
    arch.proj_dim = static_cast<Index>(m(0, 1));
    arch.gn_groups = static_cast<Index>(m(0, 2));
    arch.gn_eps = m(0, 3);
    arch.trunk.clear();
    for (Index i = 5; i < m.cols(); ++i) arch.trunk.push_back(static_cast<Index>(m(0, i)));
    LocSensModel model(arch);
    model.set_inference_alpha(m(0, 4));
    nn::assign_parameters<Scalar>(tensors, model.parameters());
    return model;
  }

 private:
  Architecture arch_;
  double inference_alpha_ = 1.0;
  nn::Dense<Scalar> img_, tag_, loc_;
  std::vector<nn::Dense<Scalar>> dense_;
  std::vector<nn::GroupNorm<Scalar>> norm_;
  nn::Dense<Scalar> head_;
};

/// Single-triplet score. r and v are expected to be L2-normalized already.
template <typename Scalar>
double score_triplet(const LocSensModel<Scalar>& model, const Tensor<Scalar>& r, const Tensor<Scalar>& v,
                     geo::NormCoord g, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("score_triplet: alpha must lie in [0,1]");
  Tensor<Scalar> gc(1, 2);
  gc << static_cast<Scalar>(g.u), static_cast<Scalar>(g.v);
  return static_cast<double>(model.forward(r, v, gc, {static_cast<Scalar>(alpha)})(0, 0));
}

/// max(0, s_n - s_x + m) and its derivatives w.r.t. s_x and s_n.
struct MarginLoss {
  double value = 0.0;
  double d_pos = 0.0;
  double d_neg = 0.0;
};

inline MarginLoss margin_ranking_loss(double s_pos, double s_neg, double margin) {
  if (!(margin > 0.0)) throw ValidationError("margin must be > 0");
  // (s_neg + m) - s_pos is positive exactly when s_pos < s_neg + m in
  // floating point, so the zero set matches that comparison bit for bit.
  const double l = (s_neg + margin) - s_pos;
  if (l > 0.0) return {l, -1.0, 1.0};
  return {0.0, 0.0, 0.0};
}

}  // namespace locsens::scorer
