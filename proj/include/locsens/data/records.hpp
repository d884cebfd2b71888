#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "locsens/error.hpp"
#include "locsens/geo.hpp"

namespace locsens::data {

using ImageId = std::int64_t;
using TagId = std::int32_t;

/// Hard cap on hashtags per photo, counted on the raw tag list.
inline constexpr std::size_t kMaxTagsPerPhoto = 15;

/// A photo before vocabulary filtering: free-text tags, possibly no location.
struct RawRecord {
  ImageId id = 0;
  std::vector<float> feature;
  std::vector<std::string> tags;
  std::optional<geo::GeoCoord> location;
  std::optional<std::string> country;
  std::optional<std::string> town;
};

struct PhotoRecord {
  ImageId id = 0;
  std::vector<float> feature;
  std::vector<TagId> tags;  // sorted, unique, vocabulary ids
  geo::GeoCoord location;
  std::optional<std::string> country;
  std::optional<std::string> town;

  bool has_tag(TagId t) const { return std::binary_search(tags.begin(), tags.end(), t); }

  friend bool operator==(const PhotoRecord&, const PhotoRecord&) = default;
};

/// Ordered hashtag list with a label <-> index bijection.
class TagVocabulary {
 public:
  TagVocabulary() = default;
  explicit TagVocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw ValidationError("vocabulary needs at least 2 tags, got " +
                            std::to_string(labels_.size()));
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty()) throw ValidationError("vocabulary label is empty");
      if (!index_.emplace(labels_[i], static_cast<TagId>(i)).second) {
        throw ValidationError("duplicate vocabulary label: " + labels_[i]);
      }
    }
  }

  std::size_t size() const { return labels_.size(); }
  const std::string& label(TagId id) const { return labels_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::optional<TagId> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TagId id(const std::string& label) const {
    auto found = find(label);
    if (!found) throw ValidationError("unknown tag: " + label);
    return *found;
  }

  bool contains(TagId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < labels_.size();
  }

  friend bool operator==(const TagVocabulary& a, const TagVocabulary& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, TagId> index_;
};

struct DatasetSplit {
  std::vector<ImageId> train;
  std::vector<ImageId> val;
  std::vector<ImageId> test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Filtered records sorted by id, their vocabulary, and the partition.
class Dataset {
 public:
  Dataset() = default;
  Dataset(TagVocabulary vocab, std::vector<PhotoRecord> records, DatasetSplit split)
      : vocab_(std::move(vocab)), records_(std::move(records)), split_(std::move(split)) {
    std::sort(records_.begin(), records_.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!by_id_.emplace(records_[i].id, i).second) {
        throw ValidationError("duplicate record id " + std::to_string(records_[i].id));
      }
    }
    feature_dim_ = records_.empty() ? 0 : records_.front().feature.size();
    for (const auto& r : records_) {
      if (r.feature.size() != feature_dim_) {
        throw ValidationError("record " + std::to_string(r.id) + " has feature dimension " +
                              std::to_string(r.feature.size()) + ", expected " +
                              std::to_string(feature_dim_));
      }
      for (TagId t : r.tags) {
        if (!vocab_.contains(t)) {
          throw ValidationError("record " + std::to_string(r.id) + " has tag id outside vocabulary");
        }
      }
    }
    for (const auto* part : {&split_.train, &split_.val, &split_.test}) {
      for (ImageId id : *part) {
        if (!by_id_.count(id)) {
          throw ValidationError("split references unknown record " + std::to_string(id));
        }
      }
    }
  }

  const TagVocabulary& vocab() const { return vocab_; }
  const std::vector<PhotoRecord>& records() const { return records_; }
  const DatasetSplit& split() const { return split_; }
  std::size_t feature_dim() const { return feature_dim_; }

  const PhotoRecord& record(ImageId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw ValidationError("unknown image id " + std::to_string(id));
    return records_[it->second];
  }

  bool contains(ImageId id) const { return by_id_.count(id) != 0; }

  std::vector<const PhotoRecord*> subset(const std::vector<ImageId>& ids) const {
    std::vector<const PhotoRecord*> out;
    out.reserve(ids.size());
    for (ImageId id : ids) out.push_back(&record(id));
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.vocab_ == b.vocab_ && a.records_ == b.records_ && a.split_ == b.split_;
  }

 private:
  TagVocabulary vocab_;
  std::vector<PhotoRecord> records_;
  DatasetSplit split_;
  std::unordered_map<ImageId, std::size_t> by_id_;
  std::size_t feature_dim_ = 0;
};

}  // namespace locsens::data
