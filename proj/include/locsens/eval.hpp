#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/geo.hpp"

namespace locsens::eval {

using data::ImageId;
using data::TagId;
using Ranking = std::vector<std::int64_t>;

// ---------------------------------------------------------------------------
// Retrieval metrics.

/// Mean over queries of |top-k ∩ relevant| / k, in percent. Rankings shorter
/// than k count their missing entries as irrelevant.
inline double precision_at_k(const std::vector<Ranking>& rankings,
                             const std::vector<std::set<std::int64_t>>& relevant, std::size_t k) {
  if (rankings.empty()) throw ValidationError("precision_at_k: empty query set");
  if (rankings.size() != relevant.size()) throw ValidationError("precision_at_k: one relevant set per query");
  if (k < 1) throw ValidationError("precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const std::size_t n = std::min(k, rankings[q].size());
    for (std::size_t i = 0; i < n; ++i) hits += relevant[q].count(rankings[q][i]);
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k * rankings.size());
}

/// One retrieval query; `where` is empty for location-agnostic queries.
struct Query {
  TagId tag = 0;
  std::optional<geo::GeoCoord> where;

  friend bool operator==(const Query&, const Query&) = default;
};

enum class QueryMode { Agnostic, LocationSensitive };

struct QuerySet {
  QueryMode mode = QueryMode::Agnostic;
  std::vector<Query> queries;
};

/// Groundtruth tags and locations of the evaluated images, used only to
/// judge relevance.
class GroundTruth {
 public:
  explicit GroundTruth(const std::vector<const data::PhotoRecord*>& records) : records_(records) {
    for (std::size_t i = 0; i < records_.size(); ++i) by_id_.emplace(records_[i]->id, i);
  }

  const std::vector<const data::PhotoRecord*>& records() const { return records_; }

  const data::PhotoRecord* find(ImageId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : records_[it->second];
  }

  bool relevant(ImageId id, const Query& q, std::optional<geo::Granularity> level) const {
    const auto* r = find(id);
    if (!r || !r->has_tag(q.tag)) return false;
    if (!level) return true;
    if (!q.where) throw ValidationError("location-sensitive relevance needs a query location");
    return geo::within_threshold(r->location, *q.where, *level);
  }

 private:
  std::vector<const data::PhotoRecord*> records_;
  std::unordered_map<ImageId, std::size_t> by_id_;
};

namespace detail {

inline double percent(std::size_t hits, std::size_t denom) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(denom);
}

}  // namespace detail

/// P@10 where an image is relevant when it carries the query tag and, for a
/// granularity level, lies within that level's distance of the query.
/// `level` empty gives the location-agnostic variant.
inline double ls_precision_at_10(const std::vector<Ranking>& rankings, const QuerySet& queries,
                                 const GroundTruth& truth, std::optional<geo::Granularity> level) {
  constexpr std::size_t k = 10;
  if (rankings.empty()) throw ValidationError("ls_precision_at_10: empty query set");
  if (rankings.size() != queries.queries.size()) {
    throw ValidationError("ls_precision_at_10: one ranking per query required");
  }
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const std::size_t n = std::min(k, rankings[q].size());
    for (std::size_t i = 0; i < n; ++i) hits += truth.relevant(rankings[q][i], queries.queries[q], level) ? 1 : 0;
  }
  return detail::percent(hits, k * rankings.size());
}

/// Per query: every image carrying the tag, sorted by distance to the query
/// location (ties by id), top 10 judged with the same rule. No ranking can
/// do better.
inline std::vector<Ranking> upper_bound_rankings(const QuerySet& queries, const GroundTruth& truth) {
  std::vector<Ranking> out;
  out.reserve(queries.queries.size());
  for (const auto& q : queries.queries) {
    std::vector<std::pair<double, ImageId>> cands;
    for (const auto* r : truth.records()) {
      if (!r->has_tag(q.tag)) continue;
      cands.emplace_back(q.where ? geo::haversine_km(r->location, *q.where) : 0.0, r->id);
    }
    const std::size_t n = std::min<std::size_t>(10, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end());
    Ranking ranking;
    for (std::size_t i = 0; i < n; ++i) ranking.push_back(cands[i].second);
    out.push_back(std::move(ranking));
  }
  return out;
}

inline double upper_bound(const QuerySet& queries, const GroundTruth& truth,
                          std::optional<geo::Granularity> level) {
  return ls_precision_at_10(upper_bound_rankings(queries, truth), queries, truth, level);
}

// ---------------------------------------------------------------------------
// Tagging metrics.

/// Percentage of images whose top-k tags intersect their groundtruth.
inline double accuracy_at_k(const std::vector<Ranking>& rankings,
                            const std::vector<std::vector<TagId>>& groundtruth, std::size_t k) {
  if (rankings.empty()) throw ValidationError("accuracy_at_k: empty test set");
  if (rankings.size() != groundtruth.size()) throw ValidationError("accuracy_at_k: one groundtruth per image");
  if (k < 1) throw ValidationError("accuracy_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const std::set<TagId> gt(groundtruth[i].begin(), groundtruth[i].end());
    const std::size_t n = std::min(k, rankings[i].size());
    for (std::size_t j = 0; j < n; ++j) {
      if (gt.count(static_cast<TagId>(rankings[i][j]))) {
        ++hits;
        break;
      }
    }
  }
  return detail::percent(hits, rankings.size());
}

struct Diversity {
  double pct_pred = 0.0;
  double pct_cpred = 0.0;
};

/// Share of the test tag universe that appears in some top-k (pct_pred), and
/// that appears in some top-k of an image actually carrying it (pct_cpred).
inline Diversity diversity(const std::vector<Ranking>& rankings,
                           const std::vector<std::vector<TagId>>& groundtruth,
                           const std::set<TagId>& universe, std::size_t k = 10) {
  if (universe.empty()) throw ValidationError("diversity: empty tag universe");
  if (rankings.size() != groundtruth.size()) throw ValidationError("diversity: one groundtruth per image");
  std::set<TagId> predicted, correct;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const std::set<TagId> gt(groundtruth[i].begin(), groundtruth[i].end());
    const std::size_t n = std::min(k, rankings[i].size());
    for (std::size_t j = 0; j < n; ++j) {
      const auto t = static_cast<TagId>(rankings[i][j]);
      if (!universe.count(t)) continue;
      predicted.insert(t);
      if (gt.count(t)) correct.insert(t);
    }
  }
  return {detail::percent(predicted.size(), universe.size()),
          detail::percent(correct.size(), universe.size())};
}

/// Union of the groundtruth tags of `records`.
inline std::set<TagId> tag_universe(const std::vector<const data::PhotoRecord*>& records) {
  std::set<TagId> out;
  for (const auto* r : records) out.insert(r->tags.begin(), r->tags.end());
  return out;
}

// ---------------------------------------------------------------------------
// Frequency baselines.

enum class Scope { Global, Country, Town };

inline Scope parse_scope(const std::string& s) {
  if (s == "global") return Scope::Global;
  if (s == "country") return Scope::Country;
  if (s == "town") return Scope::Town;
  throw ValidationError("unknown frequency scope '" + s + "'");
}

/// Tag rankings by training frequency: count descending, tag id ascending.
struct FrequencyTables {
  std::vector<TagId> global;
  std::map<std::string, std::vector<TagId>> country;
  std::map<std::string, std::vector<TagId>> town;
};

namespace detail {

inline std::vector<TagId> rank_counts(const std::map<TagId, std::size_t>& counts) {
  std::vector<std::pair<TagId, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<TagId> out;
  out.reserve(v.size());
  for (const auto& [t, n] : v) out.push_back(t);
  return out;
}

}  // namespace detail

/// `stop_tags` are left out of every table.
inline FrequencyTables build_frequency_tables(const std::vector<const data::PhotoRecord*>& train,
                                              const std::set<TagId>& stop_tags = {}) {
  std::map<TagId, std::size_t> global;
  std::map<std::string, std::map<TagId, std::size_t>> country, town;
  for (const auto* r : train) {
    for (auto t : r->tags) {
      if (stop_tags.count(t)) continue;
      ++global[t];
      if (r->country) ++country[*r->country][t];
      if (r->town) ++town[*r->town][t];
    }
  }
  FrequencyTables out;
  out.global = detail::rank_counts(global);
  for (const auto& [k, c] : country) out.country[k] = detail::rank_counts(c);
  for (const auto& [k, c] : town) out.town[k] = detail::rank_counts(c);
  return out;
}

/// Most frequent training tags for the image's scope. An unseen or missing
/// town falls back to the country, then to the global ranking; a scope with
/// fewer than k tags is completed from the same fallback chain.
inline Ranking frequency_tagger(const FrequencyTables& tables, Scope scope,
                                const std::optional<std::string>& country,
                                const std::optional<std::string>& town, std::size_t k) {
  std::vector<const std::vector<TagId>*> chain;
  if (scope == Scope::Town && town) {
    if (auto it = tables.town.find(*town); it != tables.town.end()) chain.push_back(&it->second);
  }
  if (scope != Scope::Global && country) {
    if (auto it = tables.country.find(*country); it != tables.country.end()) chain.push_back(&it->second);
  }
  chain.push_back(&tables.global);
  Ranking out;
  std::set<TagId> seen;
  for (const auto* list : chain) {
    for (auto t : *list) {
      if (out.size() >= k) return out;
      if (seen.insert(t).second) out.push_back(t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stop tags.

inline Ranking remove_tags(const Ranking& ranking, const std::set<TagId>& stop) {
  Ranking out;
  for (auto t : ranking) {
    if (!stop.count(static_cast<TagId>(t))) out.push_back(t);
  }
  return out;
}

inline std::vector<TagId> remove_tags(const std::vector<TagId>& tags, const std::set<TagId>& stop) {
  std::vector<TagId> out;
  for (auto t : tags) {
    if (!stop.count(t)) out.push_back(t);
  }
  return out;
}

/// One label per line; blank lines ignored. Labels outside the vocabulary
/// are skipped.
inline std::set<TagId> read_stop_tags(const std::string& path, const data::TagVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stop-tag list " + path);
  std::set<TagId> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (auto id = vocab.find(line)) out.insert(*id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query sets.

/// Agnostic: every tag occurring at least `min_count` times in `test`.
/// LocationSensitive: `n` records sampled without replacement, each giving its
/// location and one of its tags drawn uniformly.
inline QuerySet build_query_set(const std::vector<const data::PhotoRecord*>& test, std::size_t n,
                                QueryMode mode, std::size_t min_count, std::uint64_t seed) {
  QuerySet out;
  out.mode = mode;
  if (mode == QueryMode::Agnostic) {
    std::map<TagId, std::size_t> counts;
    for (const auto* r : test) {
      for (auto t : r->tags) ++counts[t];
    }
    for (const auto& [t, c] : counts) {
      if (c >= min_count) out.queries.push_back({t, std::nullopt});
    }
    if (out.queries.empty()) {
      throw ValidationError("build_query_set: no tag appears " + std::to_string(min_count) +
                            " times in the test set");
    }
    return out;
  }
  if (n > test.size()) {
    throw ValidationError("build_query_set: " + std::to_string(n) + " queries requested from " +
                          std::to_string(test.size()) + " records");
  }
  if (n == 0) throw ValidationError("build_query_set: no queries requested");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> rows(test.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::shuffle(rows.begin(), rows.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* r = test[rows[i]];
    std::uniform_int_distribution<std::size_t> pick(0, r->tags.size() - 1);
    out.queries.push_back({r->tags[pick(rng)], r->location});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct Metric {
  std::string name;
  double value = 0.0;
};

/// Named scalar metrics plus provenance, serialized one metric per line as
/// "name<TAB>value<TAB>model_id<TAB>dataset_id<TAB>seed".
class MetricsReport {
 public:
  MetricsReport(std::string model_id, std::string dataset_id, std::uint64_t seed)
      : model_id_(std::move(model_id)), dataset_id_(std::move(dataset_id)), seed_(seed) {}

  void add(std::string name, double value) { metrics_.push_back({std::move(name), value}); }
  const std::vector<Metric>& metrics() const { return metrics_; }

  std::optional<double> get(const std::string& name) const {
    for (const auto& m : metrics_) {
      if (m.name == name) return m.value;
    }
    return std::nullopt;
  }

  std::string to_string() const {
    if (metrics_.empty()) throw ValidationError("metrics report is empty");
    std::ostringstream out;
    for (const auto& m : metrics_) {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, m.value, std::chars_format::fixed, 4);
      out << m.name << '\t' << std::string(buf, res.ptr) << '\t' << model_id_ << '\t' << dataset_id_
          << '\t' << seed_ << '\n';
    }
    return out.str();
  }

  void write(const std::string& path) const {
    const std::string text = to_string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write report " + path);
    out << text;
    if (!out) throw Error("failed writing report " + path);
  }

 private:
  std::string model_id_;
  std::string dataset_id_;
  std::uint64_t seed_;
  std::vector<Metric> metrics_;
};

/// Metric names used for retrieval P@10: "p@10.agnostic", "p@10.city", ...
inline std::string p10_name(std::optional<geo::Granularity> level) {
  return "p@10." + (level ? std::string(geo::granularity_name(*level)) : std::string("agnostic"));
}

}  // namespace locsens::eval
