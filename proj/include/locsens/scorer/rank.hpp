#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "locsens/error.hpp"
#include "locsens/geo.hpp"
#include "locsens/data/records.hpp"
#include "locsens/ranking.hpp"
#include "locsens/scorer/model.hpp"

namespace locsens::scorer {

namespace detail {

inline constexpr Index kScoreChunk = 2048;

/// Scores rows (images[i], tags[j]) pairs given by `pairs` at one coordinate.
template <typename Scalar>
std::vector<double> score_pairs(const LocSensModel<Scalar>& model, const Tensor<Scalar>& images,
                                const Tensor<Scalar>& tags,
                                const std::vector<std::pair<Index, Index>>& pairs, geo::NormCoord g) {
  std::vector<double> out(pairs.size());
  const auto alpha = static_cast<Scalar>(model.inference_alpha());
  for (std::size_t start = 0; start < pairs.size(); start += kScoreChunk) {
    const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(kScoreChunk));
    const auto n = static_cast<Index>(end - start);
    Tensor<Scalar> r(n, images.cols()), v(n, tags.cols()), gc(n, 2);
    for (Index i = 0; i < n; ++i) {
      const auto& [ri, ti] = pairs[start + static_cast<std::size_t>(i)];
      r.row(i) = images.row(ri);
      v.row(i) = tags.row(ti);
      gc(i, 0) = static_cast<Scalar>(g.u);
      gc(i, 1) = static_cast<Scalar>(g.v);
    }
    const auto s = model.forward(r, v, gc, std::vector<Scalar>(static_cast<std::size_t>(n), alpha));
    for (Index i = 0; i < n; ++i) out[start + static_cast<std::size_t>(i)] = static_cast<double>(s(i, 0));
  }
  return out;
}

}  // namespace detail

/// Ranks candidate images (rows of `images`, identified by `ids`) for a tag
/// queried at a location. Candidate locations are never consulted.
template <typename Scalar>
std::vector<Scored> retrieve(const LocSensModel<Scalar>& model, const Tensor<Scalar>& tags, data::TagId tag,
                             geo::GeoCoord query, const std::vector<data::ImageId>& ids,
                             const Tensor<Scalar>& images, std::size_t k) {
  if (tag < 0 || tag >= tags.rows()) throw ValidationError("unknown tag id " + std::to_string(tag));
  if (static_cast<Index>(ids.size()) != images.rows()) {
    throw ValidationError("retrieve: candidate ids and embeddings differ in length");
  }
  const auto g = geo::normalize_coord(query);
  std::vector<std::pair<Index, Index>> pairs(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) pairs[i] = {static_cast<Index>(i), tag};
  const auto s = detail::score_pairs(model, images, tags, pairs, g);
  std::vector<Scored> items(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) items[i] = {ids[i], s[i]};
  return top_k(std::move(items), k);
}

/// Ranks every vocabulary tag for one image embedding `r` (one row) at a
/// location.
template <typename Scalar>
std::vector<Scored> tag_image(const LocSensModel<Scalar>& model, const Tensor<Scalar>& tags,
                              const Tensor<Scalar>& r, geo::GeoCoord where, std::size_t k) {
  if (r.rows() != 1) throw ValidationError("tag_image: expected a single image embedding");
  const auto g = geo::normalize_coord(where);
  std::vector<std::pair<Index, Index>> pairs(static_cast<std::size_t>(tags.rows()));
  for (Index t = 0; t < tags.rows(); ++t) pairs[static_cast<std::size_t>(t)] = {0, t};
  const auto s = detail::score_pairs(model, r, tags, pairs, g);
  std::vector<Scored> items(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) items[t] = {static_cast<std::int64_t>(t), s[t]};
  return top_k(std::move(items), k);
}

}  // namespace locsens::scorer
