#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "locsens/data/records.hpp"
#include "locsens/error.hpp"

namespace locsens::data {

struct VocabSpec {
  std::size_t drop_top_n = 10;
  std::size_t keep_next_k = 100000;
  bool exclude_numeric = true;
};

/// True for labels made only of decimal digits ("2007").
inline bool is_numeric_label(const std::string& label) {
  return !label.empty() &&
         std::all_of(label.begin(), label.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

struct TagCount {
  std::string label;
  std::size_t count = 0;
};

/// Number of records carrying each label, ordered by (count desc, label asc).
inline std::vector<TagCount> count_tags(std::span<const RawRecord> corpus, bool exclude_numeric) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : corpus) {
    std::set<std::string> distinct(r.tags.begin(), r.tags.end());
    for (const auto& t : distinct) {
      if (exclude_numeric && is_numeric_label(t)) continue;
      ++counts[t];
    }
  }
  std::vector<TagCount> ranked;
  ranked.reserve(counts.size());
  for (auto& [label, n] : counts) ranked.push_back({label, n});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const TagCount& a, const TagCount& b) { return a.count > b.count; });
  return ranked;
}

/// Drops digit-only labels and the `drop_top_n` most frequent, keeps the next
/// `keep_next_k`. Vocabulary order is (frequency desc, label asc).
inline TagVocabulary build_vocabulary(std::span<const RawRecord> corpus, const VocabSpec& spec) {
  if (corpus.empty()) throw ValidationError("build_vocabulary: empty corpus");
  if (spec.keep_next_k < 1) throw ValidationError("build_vocabulary: keep_next_k must be >= 1");
  const auto ranked = count_tags(corpus, spec.exclude_numeric);
  std::vector<std::string> labels;
  for (std::size_t i = spec.drop_top_n; i < ranked.size() && labels.size() < spec.keep_next_k; ++i) {
    labels.push_back(ranked[i].label);
  }
  if (labels.empty()) throw ValidationError("build_vocabulary: resulting vocabulary is empty");
  return TagVocabulary(std::move(labels));
}

/// Keeps photos that have a location, at most 15 distinct raw tags, and at
/// least one vocabulary tag. Output is sorted by id.
inline std::vector<PhotoRecord> filter_records(std::span<const RawRecord> corpus,
                                               const TagVocabulary& vocab) {
  std::vector<PhotoRecord> out;
  std::unordered_set<ImageId> seen;
  for (const auto& r : corpus) {
    if (!seen.insert(r.id).second) {
      throw ValidationError("filter_records: duplicate id " + std::to_string(r.id));
    }
    if (!r.location) continue;
    std::set<std::string> distinct(r.tags.begin(), r.tags.end());
    if (distinct.size() > kMaxTagsPerPhoto) continue;
    std::vector<TagId> ids;
    for (const auto& t : distinct) {
      if (auto id = vocab.find(t)) ids.push_back(*id);
    }
    if (ids.empty()) continue;
    geo::validate(*r.location);
    std::sort(ids.begin(), ids.end());
    out.push_back({r.id, r.feature, std::move(ids), *r.location, r.country, r.town});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

struct SplitSizes {
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Uniform random disjoint partition. Ids are sorted before shuffling so the
/// result depends only on the id set and the seed.
inline DatasetSplit split(std::vector<ImageId> ids, SplitSizes sizes, std::uint64_t seed) {
  if (sizes.val + sizes.test > ids.size()) {
    throw ValidationError("split: requested " + std::to_string(sizes.val) + " val + " +
                          std::to_string(sizes.test) + " test from " +
                          std::to_string(ids.size()) + " records");
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("split: duplicate ids");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  DatasetSplit out;
  auto it = ids.begin();
  out.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes.val));
  it += static_cast<std::ptrdiff_t>(sizes.val);
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
  it += static_cast<std::ptrdiff_t>(sizes.test);
  out.train.assign(it, ids.end());
  for (auto* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

inline std::vector<ImageId> record_ids(std::span<const PhotoRecord> records) {
  std::vector<ImageId> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return ids;
}

/// Vocabulary, filtering and splitting in one pass.
inline Dataset prepare_dataset(std::span<const RawRecord> corpus, const VocabSpec& spec,
                               SplitSizes sizes, std::uint64_t seed) {
  auto vocab = build_vocabulary(corpus, spec);
  auto records = filter_records(corpus, vocab);
  auto parts = split(record_ids(records), sizes, seed);
  return Dataset(std::move(vocab), std::move(records), std::move(parts));
}

}  // namespace locsens::data
