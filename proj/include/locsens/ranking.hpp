#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "locsens/error.hpp"

namespace locsens {

struct Scored {
  std::int64_t id = 0;
  double score = 0.0;

  friend bool operator==(const Scored&, const Scored&) = default;
};

/// Highest scores first; equal scores in ascending id order. Returns at most
/// `k` entries (all of them when k >= size).
inline std::vector<Scored> top_k(std::vector<Scored> items, std::size_t k) {
  for (const auto& s : items) {
    if (std::isnan(s.score)) throw Error("ranking: NaN score for id " + std::to_string(s.id));
  }
  auto before = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  k = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(), before);
  items.resize(k);
  return items;
}

inline std::vector<std::int64_t> ids_of(const std::vector<Scored>& ranked) {
  std::vector<std::int64_t> out;
  out.reserve(ranked.size());
  for (const auto& s : ranked) out.push_back(s.id);
  return out;
}

}  // namespace locsens
