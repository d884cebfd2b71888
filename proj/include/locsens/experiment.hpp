#pragma once

// Evaluation harness shared by the command-line tool and the test suites:
// wraps every model family behind one ranking interface and turns it into a
// MetricsReport.

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locsens/baselines.hpp"
#include "locsens/data/records.hpp"
#include "locsens/eval.hpp"
#include "locsens/geo.hpp"
#include "locsens/ranking.hpp"
#include "locsens/scorer/embeddings.hpp"
#include "locsens/scorer/rank.hpp"

namespace locsens::experiment {

using eval::Ranking;
using nn::Tensor;

/// Ranks a fixed candidate image set for tag queries, and vocabulary tags for
/// single images.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual bool can_retrieve() const { return true; }
  virtual std::vector<Scored> retrieve(data::TagId tag, const std::optional<geo::GeoCoord>& where,
                                       std::size_t k) const = 0;
  virtual std::vector<Scored> tag(const data::PhotoRecord& image, const std::optional<geo::GeoCoord>& where,
                                  std::size_t k) const = 0;
};

/// Location-agnostic learners: one score matrix over the candidates.
template <typename Scalar>
class BaselineRanker : public Ranker {
 public:
  BaselineRanker(const baselines::BaselineModel<Scalar>& model,
                 const std::vector<const data::PhotoRecord*>& candidates,
                 const Tensor<double>* word_vectors)
      : model_(model), word_vectors_(word_vectors) {
    for (const auto* r : candidates) ids_.push_back(r->id);
    if (!candidates.empty()) {
      scores_ = baselines::score_matrix(model_, baselines::feature_matrix<Scalar>(candidates), word_vectors_);
    }
  }

  std::vector<Scored> retrieve(data::TagId tag, const std::optional<geo::GeoCoord>&,
                               std::size_t k) const override {
    if (tag < 0 || tag >= scores_.cols()) throw ValidationError("unknown tag id " + std::to_string(tag));
    std::vector<Scored> items(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) items[i] = {ids_[i], scores_(static_cast<nn::Index>(i), tag)};
    return top_k(std::move(items), k);
  }

  std::vector<Scored> tag(const data::PhotoRecord& image, const std::optional<geo::GeoCoord>&,
                          std::size_t k) const override {
    const auto x = baselines::feature_matrix<Scalar>({&image});
    return baselines::tag_image(model_, x, k, word_vectors_);
  }

 private:
  const baselines::BaselineModel<Scalar>& model_;
  const Tensor<double>* word_vectors_;
  std::vector<data::ImageId> ids_;
  Tensor<double> scores_;
};

/// Triplet scorer over MCC embeddings. Queries without a location are scored
/// at the image's own location when tagging and rejected for retrieval.
template <typename Scalar, typename MccScalar = Scalar>
class LocSensRanker : public Ranker {
 public:
  LocSensRanker(const scorer::LocSensModel<Scalar>& model, const baselines::BaselineModel<MccScalar>& mcc,
                const std::vector<const data::PhotoRecord*>& candidates)
      : model_(model), mcc_(mcc), emb_(scorer::embed_records<Scalar>(mcc, candidates)) {}

  std::vector<Scored> retrieve(data::TagId tag, const std::optional<geo::GeoCoord>& where,
                               std::size_t k) const override {
    // A location-silenced model ignores the coordinate, so any valid one will do.
    const geo::GeoCoord g = where ? *where : geo::GeoCoord{};
    if (!where && model_.inference_alpha() != 0.0) {
      throw ValidationError("location-aware retrieval needs a query location");
    }
    return scorer::retrieve(model_, emb_.tags, tag, g, emb_.ids, emb_.images, k);
  }

  std::vector<Scored> tag(const data::PhotoRecord& image, const std::optional<geo::GeoCoord>& where,
                          std::size_t k) const override {
    Tensor<Scalar> r;
    if (emb_.row_of.count(image.id)) {
      r = emb_.images.row(emb_.row(image.id));
    } else {
      r = scorer::embed_records<Scalar>(mcc_, {&image}).images;
    }
    return scorer::tag_image(model_, emb_.tags, r, where ? *where : image.location, k);
  }

  const scorer::EmbeddingSet<Scalar>& embeddings() const { return emb_; }

 private:
  const scorer::LocSensModel<Scalar>& model_;
  const baselines::BaselineModel<MccScalar>& mcc_;
  scorer::EmbeddingSet<Scalar> emb_;
};

/// Most frequent training tags for the image's country or town; cannot
/// retrieve.
class FrequencyRanker : public Ranker {
 public:
  FrequencyRanker(eval::FrequencyTables tables, eval::Scope scope) : tables_(std::move(tables)), scope_(scope) {}

  bool can_retrieve() const override { return false; }

  std::vector<Scored> retrieve(data::TagId, const std::optional<geo::GeoCoord>&, std::size_t) const override {
    throw ValidationError("frequency baselines do not support retrieval");
  }

  std::vector<Scored> tag(const data::PhotoRecord& image, const std::optional<geo::GeoCoord>&,
                          std::size_t k) const override {
    const auto ranking = eval::frequency_tagger(tables_, scope_, image.country, image.town, k);
    std::vector<Scored> out;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      out.push_back({ranking[i], static_cast<double>(ranking.size() - i)});
    }
    return out;
  }

 private:
  eval::FrequencyTables tables_;
  eval::Scope scope_;
};

struct EvalOptions {
  std::size_t location_queries = 1000;  // 0 skips retrieval
  std::uint64_t seed = 1;
  std::set<data::TagId> stop_tags;
  bool tagging = true;
};

/// Retrieval rankings for every query of a set, top 10.
inline std::vector<Ranking> retrieval_rankings(const Ranker& ranker, const eval::QuerySet& queries) {
  std::vector<Ranking> out;
  out.reserve(queries.queries.size());
  for (const auto& q : queries.queries) out.push_back(ids_of(ranker.retrieve(q.tag, q.where, 10)));
  return out;
}

/// Tag rankings (top k after stop-tag removal) for every test image at its
/// own location.
inline std::vector<Ranking> tagging_rankings(const Ranker& ranker, const std::vector<const data::PhotoRecord*>& test,
                                             std::size_t k, const std::set<data::TagId>& stop_tags) {
  std::vector<Ranking> out;
  out.reserve(test.size());
  for (const auto* r : test) {
    auto ranking = eval::remove_tags(ids_of(ranker.tag(*r, r->location, k + stop_tags.size())), stop_tags);
    if (ranking.size() > k) ranking.resize(k);
    out.push_back(std::move(ranking));
  }
  return out;
}

/// Location-sensitive retrieval (agnostic relevance plus the five levels and
/// their upper bounds) on queries drawn from `test`, and tagging accuracy /
/// diversity over every test image.
inline void evaluate(const Ranker& ranker, const std::vector<const data::PhotoRecord*>& test,
                     const EvalOptions& options, eval::MetricsReport& report) {
  if (test.empty()) throw ValidationError("evaluate: empty test set");
  if (options.location_queries > 0 && ranker.can_retrieve()) {
    const eval::GroundTruth truth(test);
    const auto queries = eval::build_query_set(test, std::min(options.location_queries, test.size()),
                                               eval::QueryMode::LocationSensitive, 0, options.seed);
    const auto rankings = retrieval_rankings(ranker, queries);
    report.add(eval::p10_name(std::nullopt), eval::ls_precision_at_10(rankings, queries, truth, std::nullopt));
    for (auto level : geo::kGranularities) {
      report.add(eval::p10_name(level), eval::ls_precision_at_10(rankings, queries, truth, level));
    }
    for (auto level : geo::kGranularities) {
      report.add("upper_bound." + std::string(geo::granularity_name(level)),
                 eval::upper_bound(queries, truth, level));
    }
  }
  if (options.tagging) {
    std::vector<const data::PhotoRecord*> kept;
    std::vector<std::vector<data::TagId>> gt;
    for (const auto* r : test) {
      auto tags = eval::remove_tags(r->tags, options.stop_tags);
      if (tags.empty()) continue;
      kept.push_back(r);
      gt.push_back(std::move(tags));
    }
    if (kept.empty()) throw ValidationError("evaluate: no test image keeps a tag after stop-tag removal");
    const auto rankings = tagging_rankings(ranker, kept, 50, options.stop_tags);
    report.add("a@1", eval::accuracy_at_k(rankings, gt, 1));
    report.add("a@10", eval::accuracy_at_k(rankings, gt, 10));
    report.add("a@50", eval::accuracy_at_k(rankings, gt, 50));
    std::set<data::TagId> universe;
    for (const auto& tags : gt) universe.insert(tags.begin(), tags.end());
    const auto div = eval::diversity(rankings, gt, universe, 10);
    report.add("pct_pred", div.pct_pred);
    report.add("pct_cpred", div.pct_cpred);
  }
}

}  // namespace locsens::experiment
