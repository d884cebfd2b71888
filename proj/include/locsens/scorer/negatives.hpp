#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/geo.hpp"

namespace locsens::scorer {

enum class NegativeMode { ReplaceImage, ReplaceTag, Mixed };

inline std::string negative_mode_name(NegativeMode m) {
  switch (m) {
    case NegativeMode::ReplaceImage: return "replace_image";
    case NegativeMode::ReplaceTag: return "replace_tag";
    case NegativeMode::Mixed: return "mixed";
  }
  return "";
}

inline NegativeMode parse_negative_mode(const std::string& s) {
  if (s == "replace_image") return NegativeMode::ReplaceImage;
  if (s == "replace_tag") return NegativeMode::ReplaceTag;
  if (s == "mixed") return NegativeMode::Mixed;
  throw ValidationError("unknown negative mode '" + s + "' (expected replace_image, replace_tag or mixed)");
}

struct Triplet {
  data::ImageId image_id = 0;
  data::TagId tag_id = 0;
  geo::NormCoord coord;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

inline constexpr int kMaxRejectionDraws = 1000;

/// Lookup structure over the training records used to draw replacements.
class TripletIndex {
 public:
  TripletIndex(const std::vector<const data::PhotoRecord*>& records, std::size_t num_tags)
      : records_(records), num_tags_(num_tags) {
    if (records_.empty()) throw ValidationError("triplet index: no records");
    if (num_tags_ < 1) throw ValidationError("triplet index: empty vocabulary");
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (!row_.emplace(records_[i]->id, i).second) {
        throw ValidationError("triplet index: duplicate id " + std::to_string(records_[i]->id));
      }
    }
  }

  std::size_t size() const { return records_.size(); }
  std::size_t num_tags() const { return num_tags_; }
  const data::PhotoRecord& record_at(std::size_t row) const { return *records_[row]; }

  const data::PhotoRecord& record(data::ImageId id) const {
    auto it = row_.find(id);
    if (it == row_.end()) throw ValidationError("triplet index: unknown image " + std::to_string(id));
    return *records_[it->second];
  }

  /// Every observed (image, tag) pair at the image's own location, in record
  /// order then tag order.
  std::vector<Triplet> positives() const {
    std::vector<Triplet> out;
    for (const auto* r : records_) {
      const auto g = geo::normalize_coord(r->location);
      for (auto t : r->tags) out.push_back({r->id, t, g});
    }
    return out;
  }

 private:
  std::vector<const data::PhotoRecord*> records_;
  std::size_t num_tags_;
  std::unordered_map<data::ImageId, std::size_t> row_;
};

namespace detail {

template <class Rng>
Triplet replace_image(const Triplet& pos, const TripletIndex& index, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  for (int i = 0; i < kMaxRejectionDraws; ++i) {
    const auto& r = index.record_at(pick(rng));
    if (!r.has_tag(pos.tag_id)) return {r.id, pos.tag_id, pos.coord};
  }
  throw Error("no image without tag " + std::to_string(pos.tag_id) + " found after " +
              std::to_string(kMaxRejectionDraws) + " draws");
}

template <class Rng>
Triplet replace_tag(const Triplet& pos, const TripletIndex& index, Rng& rng) {
  const auto& r = index.record(pos.image_id);
  std::uniform_int_distribution<data::TagId> pick(0, static_cast<data::TagId>(index.num_tags() - 1));
  for (int i = 0; i < kMaxRejectionDraws; ++i) {
    const auto t = pick(rng);
    if (!r.has_tag(t)) return {pos.image_id, t, pos.coord};
  }
  throw Error("no tag outside the groundtruth of image " + std::to_string(pos.image_id) +
              " found after " + std::to_string(kMaxRejectionDraws) + " draws");
}

}  // namespace detail

/// Draws `count` negatives for one positive. Replacement images are drawn
/// uniformly among images lacking the tag; replacement tags uniformly among
/// tags outside the image's groundtruth. The coordinate is kept.
template <class Rng>
std::vector<Triplet> make_negatives(const Triplet& positive, NegativeMode mode, int count,
                                    const TripletIndex& index, Rng& rng) {
  if (count < 1) throw ValidationError("make_negatives: count must be >= 1");
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(count));
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < count; ++i) {
    bool image = mode == NegativeMode::ReplaceImage;
    if (mode == NegativeMode::Mixed) image = coin(rng);
    out.push_back(image ? detail::replace_image(positive, index, rng)
                        : detail::replace_tag(positive, index, rng));
  }
  return out;
}

}  // namespace locsens::scorer
