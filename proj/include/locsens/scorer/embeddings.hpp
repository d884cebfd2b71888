#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "locsens/baselines.hpp"
#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/nn/activations.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::scorer {

using nn::Index;
using nn::Tensor;

/// L2-normalized image embeddings for a set of records plus the tag
/// embeddings, both as consumed by the triplet scorer.
template <typename Scalar>
struct EmbeddingSet {
  std::vector<data::ImageId> ids;
  Tensor<Scalar> images;  // one row per id
  Tensor<Scalar> tags;    // one row per vocabulary tag
  std::unordered_map<data::ImageId, Index> row_of;

  Index dim() const { return tags.cols(); }

  Index row(data::ImageId id) const {
    auto it = row_of.find(id);
    if (it == row_of.end()) throw ValidationError("no embedding for image " + std::to_string(id));
    return it->second;
  }
};

/// Image embeddings are the MCC bottleneck outputs; tag embeddings are the
/// MCC classifier rows. Both are L2-normalized.
template <typename Scalar, typename ModelScalar>
EmbeddingSet<Scalar> embed_records(const baselines::BaselineModel<ModelScalar>& mcc,
                                   const std::vector<const data::PhotoRecord*>& records) {
  EmbeddingSet<Scalar> out;
  out.tags = nn::l2_normalize<ModelScalar>(mcc.tag_embeddings()).y.template cast<Scalar>();
  out.images.resize(static_cast<Index>(records.size()), out.tags.cols());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < records.size(); start += kChunk) {
    const std::size_t end = std::min(records.size(), start + kChunk);
    std::vector<const data::PhotoRecord*> chunk(records.begin() + static_cast<std::ptrdiff_t>(start),
                                                records.begin() + static_cast<std::ptrdiff_t>(end));
    const auto x = baselines::feature_matrix<ModelScalar>(chunk);
    out.images.middleRows(static_cast<Index>(start), static_cast<Index>(end - start)) =
        nn::l2_normalize<ModelScalar>(mcc.embed(x)).y.template cast<Scalar>();
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.ids.push_back(records[i]->id);
    out.row_of.emplace(records[i]->id, static_cast<Index>(i));
  }
  return out;
}

}  // namespace locsens::scorer
