#pragma once

// Seeded generator of geotagged photo corpora with planted tag/location
// structure. Three tag families:
//   place_name            bound to one city; its photos lie inside that city
//   location_conditioned  present in several cities, with a different visual
//                         prototype in each (same concept, local appearance)
//   location_invariant    one prototype, no spatial preference
// A photo's tags are drawn slot by slot from the configured mix. Photos with
// any place/conditioned tag are anchored to a city and scattered around its
// center; the others are placed uniformly on the sphere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "locsens/data/io.hpp"
#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/geo.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::data {

enum class TagType { PlaceName, LocationConditioned, LocationInvariant };

inline std::string tag_type_name(TagType t) {
  switch (t) {
    case TagType::PlaceName: return "place_name";
    case TagType::LocationConditioned: return "location_conditioned";
    case TagType::LocationInvariant: return "location_invariant";
  }
  return "";
}

struct TagMix {
  double place_name = 0.2;
  double location_conditioned = 0.3;
  double location_invariant = 0.5;
};

struct SyntheticConfig {
  std::size_t num_images = 11000;
  std::size_t num_tags = 100;
  std::size_t feature_dim = 128;
  std::size_t word_dim = 300;
  TagMix mix;
  std::size_t num_cities = 10;
  std::size_t regions_per_tag = 3;
  double city_spread_km = 5.0;
  // Feature noise: each image gets its own scale noise * exp(noise_spread * z),
  // z ~ N(0,1), so photo quality varies across the corpus.
  double noise = 0.1;
  double noise_spread = 0.0;
  // Share of a conditioned tag's regional prototype that is region specific.
  double region_specificity = 0.7;
  double mean_tags = 4.25;
  // Very frequent uninformative tags; the vocabulary step removes them.
  std::size_t filler_tags = 10;
  double filler_prob = 0.25;
  double numeric_tag_prob = 0.05;
  double missing_location_fraction = 0.01;
  double overflow_fraction = 0.005;
  std::uint64_t seed = 1;
};

struct City {
  std::string name;
  geo::GeoCoord center;
  std::string country;
};

struct PlantedTag {
  std::string label;
  TagType type = TagType::LocationInvariant;
  std::vector<int> cities;  // one for place names, several for conditioned
};

struct Manifest {
  SyntheticConfig config;
  std::vector<City> cities;
  std::vector<PlantedTag> tags;
  std::vector<std::pair<ImageId, int>> image_city;  // -1 when not anchored
  std::vector<std::string> filler_labels;

  const PlantedTag* find_tag(const std::string& label) const {
    for (const auto& t : tags) {
      if (t.label == label) return &t;
    }
    return nullptr;
  }
};

struct SyntheticCorpus {
  std::vector<RawRecord> records;
  WordVectorTable word_vectors;
  Manifest manifest;
};

namespace detail {

struct NamedCity {
  const char* name;
  double lat;
  double lon;
  const char* country;
};

// Pairwise at least ~2300 km apart.
inline constexpr std::array<NamedCity, 16> kCities = {{
    {"rome", 41.9028, 12.4964, "italy"},
    {"tokyo", 35.6762, 139.6503, "japan"},
    {"newyork", 40.7128, -74.0060, "unitedstates"},
    {"sydney", -33.8688, 151.2093, "australia"},
    {"riodejaneiro", -22.9068, -43.1729, "brazil"},
    {"capetown", -33.9249, 18.4241, "southafrica"},
    {"mumbai", 19.0760, 72.8777, "india"},
    {"losangeles", 34.0522, -118.2437, "unitedstates"},
    {"moscow", 55.7558, 37.6173, "russia"},
    {"singapore", 1.3521, 103.8198, "singapore"},
    {"lima", -12.0464, -77.0428, "peru"},
    {"nairobi", -1.2921, 36.8219, "kenya"},
    {"reykjavik", 64.1466, -21.9426, "iceland"},
    {"honolulu", 21.3069, -157.8583, "unitedstates"},
    {"anchorage", 61.2181, -149.9003, "unitedstates"},
    {"perth", -31.9505, 115.8605, "australia"},
}};

inline constexpr std::array<const char*, 8> kPlaceSuffixes = {
    "", "downtown", "oldtown", "harbour", "skyline", "streets", "nights", "trip"};

inline constexpr std::array<const char*, 40> kConditionedWords = {
    "temple", "bridge", "beach", "market", "church", "castle", "river", "lake",
    "mountain", "harbor", "street", "park", "garden", "festival", "food", "car",
    "bus", "train", "house", "tower", "statue", "museum", "palace", "square",
    "boat", "island", "forest", "desert", "snow", "road", "hiking", "winter",
    "wedding", "parade", "costume", "dance", "shrine", "monument", "village", "fountain"};

inline constexpr std::array<const char*, 40> kInvariantWords = {
    "cat", "dog", "tomato", "flower", "sunset", "portrait", "bird", "macro",
    "clouds", "sky", "night", "light", "blue", "red", "green", "yellow",
    "water", "tree", "leaf", "insect", "butterfly", "coffee", "cake", "baby",
    "kid", "smile", "eye", "hand", "shadow", "reflection", "window", "door",
    "book", "guitar", "bicycle", "horse", "fish", "rain", "moon", "star"};

inline constexpr std::array<const char*, 10> kFillerWords = {
    "photo", "nikon", "canon", "travel", "vacation", "iphone", "instagram", "bw", "film", "holiday"};

inline std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace detail

/// Validates the configuration and returns (place, conditioned, invariant)
/// tag counts.
inline std::array<std::size_t, 3> planted_tag_counts(const SyntheticConfig& c) {
  const auto& m = c.mix;
  if (m.place_name < 0 || m.location_conditioned < 0 || m.location_invariant < 0 ||
      std::abs(m.place_name + m.location_conditioned + m.location_invariant - 1.0) > 1e-9) {
    throw ValidationError("synthetic: tag mix fractions must be non-negative and sum to 1");
  }
  if (c.num_images == 0 || c.num_tags < 2 || c.feature_dim == 0 || c.word_dim == 0) {
    throw ValidationError("synthetic: counts must be positive (and at least 2 tags)");
  }
  if (!(c.mean_tags >= 1.0) || c.mean_tags > static_cast<double>(kMaxTagsPerPhoto)) {
    throw ValidationError("synthetic: mean_tags must lie in [1, 15]");
  }
  const auto place = static_cast<std::size_t>(std::llround(m.place_name * c.num_tags));
  const auto cond = static_cast<std::size_t>(std::llround(m.location_conditioned * c.num_tags));
  if (place + cond > c.num_tags) throw ValidationError("synthetic: infeasible tag mix");
  const std::size_t inv = c.num_tags - place - cond;
  if ((place > 0 || cond > 0) && c.num_cities == 0) {
    throw ValidationError("synthetic: located tags need at least one city");
  }
  if (cond > 0 && (c.regions_per_tag == 0 || c.regions_per_tag > c.num_cities)) {
    throw ValidationError("synthetic: regions_per_tag must lie in [1, num_cities]");
  }
  if (inv == 0 && m.location_invariant > 0) {
    throw ValidationError("synthetic: invariant fraction too small for the tag count");
  }
  if (!(c.noise >= 0.0) || !(c.noise_spread >= 0.0)) {
    throw ValidationError("synthetic: noise and noise_spread must be >= 0");
  }
  if (!(c.region_specificity >= 0.0 && c.region_specificity <= 1.0)) {
    throw ValidationError("synthetic: region_specificity must lie in [0,1]");
  }
  if (c.filler_tags > detail::kFillerWords.size()) {
    throw ValidationError("synthetic: at most " + std::to_string(detail::kFillerWords.size()) +
                          " filler tags");
  }
  return {place, cond, inv};
}

inline SyntheticCorpus generate_synthetic(const SyntheticConfig& config) {
  const auto [n_place, n_cond, n_inv] = planted_tag_counts(config);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Manifest manifest;
  manifest.config = config;

  // Cities: the named list first, then random centers kept apart.
  for (std::size_t c = 0; c < config.num_cities; ++c) {
    if (c < detail::kCities.size()) {
      const auto& nc = detail::kCities[c];
      manifest.cities.push_back({nc.name, {nc.lat, nc.lon}, nc.country});
      continue;
    }
    geo::GeoCoord center;
    for (int attempt = 0;; ++attempt) {
      center = {std::asin(2.0 * unif(rng) - 1.0) * 180.0 / std::numbers::pi * 0.8,
                unif(rng) * 360.0 - 180.0};
      bool ok = true;
      for (const auto& other : manifest.cities) {
        if (geo::haversine_km(center, other.center) < 1000.0) ok = false;
      }
      if (ok || attempt > 1000) break;
    }
    const std::string name = "city" + std::to_string(c);
    manifest.cities.push_back({name, center, "country" + std::to_string(c)});
  }

  // Labels.
  std::set<std::string> used;
  auto claim = [&](std::string label) {
    std::string candidate = label;
    for (int k = 2; used.count(candidate); ++k) candidate = label + std::to_string(k);
    used.insert(candidate);
    return candidate;
  };
  for (std::size_t i = 0; i < config.filler_tags; ++i) {
    manifest.filler_labels.push_back(claim(detail::kFillerWords[i]));
  }
  std::vector<std::size_t> places_in_city(config.num_cities, 0);
  for (std::size_t i = 0; i < n_place; ++i) {
    const int city = static_cast<int>(i % config.num_cities);
    const std::size_t j = places_in_city[static_cast<std::size_t>(city)]++;
    std::string label = manifest.cities[static_cast<std::size_t>(city)].name;
    if (j > 0) {
      label += j < detail::kPlaceSuffixes.size() ? std::string(detail::kPlaceSuffixes[j])
                                                 : "place" + std::to_string(j);
    }
    manifest.tags.push_back({claim(label), TagType::PlaceName, {city}});
  }
  std::vector<int> city_order(config.num_cities);
  for (std::size_t i = 0; i < n_cond; ++i) {
    std::iota(city_order.begin(), city_order.end(), 0);
    std::shuffle(city_order.begin(), city_order.end(), rng);
    std::vector<int> regions(city_order.begin(),
                             city_order.begin() + static_cast<std::ptrdiff_t>(config.regions_per_tag));
    std::sort(regions.begin(), regions.end());
    std::string label = i < detail::kConditionedWords.size() ? std::string(detail::kConditionedWords[i])
                                                             : "concept" + std::to_string(i);
    manifest.tags.push_back({claim(label), TagType::LocationConditioned, std::move(regions)});
  }
  for (std::size_t i = 0; i < n_inv; ++i) {
    std::string label = i < detail::kInvariantWords.size() ? std::string(detail::kInvariantWords[i])
                                                           : "object" + std::to_string(i);
    manifest.tags.push_back({claim(label), TagType::LocationInvariant, {}});
  }

  // Visual prototypes. Conditioned tags get one per region, sharing a
  // common component.
  const std::size_t F = config.feature_dim;
  const std::size_t H = manifest.tags.size();
  std::vector<std::vector<double>> shared(H);
  std::vector<std::vector<std::vector<double>>> regional(H);
  const double w_region = std::sqrt(config.region_specificity);
  const double w_shared = std::sqrt(1.0 - config.region_specificity);
  for (std::size_t t = 0; t < H; ++t) {
    shared[t] = detail::gaussian_vector(F, rng);
    if (manifest.tags[t].type == TagType::LocationConditioned) {
      for (std::size_t k = 0; k < manifest.tags[t].cities.size(); ++k) {
        auto own = detail::gaussian_vector(F, rng);
        for (std::size_t d = 0; d < F; ++d) own[d] = w_shared * shared[t][d] + w_region * own[d];
        regional[t].push_back(std::move(own));
      }
    }
  }

  // Word vectors: a fixed random linear image of the shared prototype plus
  // a little noise, so the text space is consistent with the visual one.
  WordVectorTable words;
  {
    const std::size_t D = config.word_dim;
    nn::Tensor<double> proj(static_cast<nn::Index>(D), static_cast<nn::Index>(F));
    for (nn::Index i = 0; i < proj.size(); ++i) proj.data()[i] = normal(rng) / std::sqrt(double(F));
    words.vectors.resize(static_cast<nn::Index>(H), static_cast<nn::Index>(D));
    for (std::size_t t = 0; t < H; ++t) {
      words.labels.push_back(manifest.tags[t].label);
      Eigen::Map<const Eigen::VectorXd> s(shared[t].data(), static_cast<nn::Index>(F));
      Eigen::VectorXd v = proj * s;
      for (nn::Index j = 0; j < v.size(); ++j) v(j) += 0.05 * normal(rng);
      words.vectors.row(static_cast<nn::Index>(t)) = v.transpose();
    }
  }

  // Per-city tag pools.
  std::vector<std::vector<std::size_t>> city_places(config.num_cities), city_cond(config.num_cities);
  std::vector<std::size_t> invariant_pool;
  for (std::size_t t = 0; t < H; ++t) {
    const auto& tag = manifest.tags[t];
    if (tag.type == TagType::PlaceName) city_places[static_cast<std::size_t>(tag.cities[0])].push_back(t);
    if (tag.type == TagType::LocationConditioned) {
      for (int c : tag.cities) city_cond[static_cast<std::size_t>(c)].push_back(t);
    }
    if (tag.type == TagType::LocationInvariant) invariant_pool.push_back(t);
  }

  const std::array<double, 3> mix = {config.mix.place_name, config.mix.location_conditioned,
                                     config.mix.location_invariant};
  std::poisson_distribution<int> extra_tags(config.mean_tags - 1.0);
  std::vector<std::string> numeric_labels;
  for (int y = 2004; y <= 2012; ++y) numeric_labels.push_back(std::to_string(y));

  SyntheticCorpus corpus;
  corpus.records.reserve(config.num_images);
  for (std::size_t i = 0; i < config.num_images; ++i) {
    const ImageId id = static_cast<ImageId>(i + 1);
    const std::size_t n_tags = std::min<std::size_t>(
        kMaxTagsPerPhoto, 1 + static_cast<std::size_t>(extra_tags(rng)));
    std::vector<int> slot_types(n_tags);
    bool anchored = false;
    for (auto& s : slot_types) {
      std::discrete_distribution<int> pick(mix.begin(), mix.end());
      s = pick(rng);
      if (s != 2) anchored = true;
    }
    int city = -1;
    if (anchored) {
      city = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, config.num_cities - 1)(rng));
    }

    std::vector<std::size_t> chosen;
    auto pool_for = [&](int type) -> std::vector<std::size_t> {
      std::vector<std::size_t> pool;
      const std::vector<std::size_t>* src = &invariant_pool;
      if (type == 0) src = city >= 0 ? &city_places[static_cast<std::size_t>(city)] : nullptr;
      if (type == 1) src = city >= 0 ? &city_cond[static_cast<std::size_t>(city)] : nullptr;
      if (!src) return pool;
      for (auto t : *src) {
        if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) pool.push_back(t);
      }
      return pool;
    };
    for (int type : slot_types) {
      auto pool = pool_for(type);
      if (pool.empty()) {
        // Redraw the slot type among families that still have free tags.
        std::array<double, 3> w = mix;
        for (int k = 0; k < 3; ++k) {
          if (pool_for(k).empty()) w[static_cast<std::size_t>(k)] = 0.0;
        }
        if (w[0] + w[1] + w[2] <= 0.0) break;
        std::discrete_distribution<int> pick(w.begin(), w.end());
        pool = pool_for(pick(rng));
      }
      chosen.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    }

    RawRecord rec;
    rec.id = id;
    geo::GeoCoord loc;
    if (city >= 0) {
      loc = geo::offset_km(manifest.cities[static_cast<std::size_t>(city)].center,
                           config.city_spread_km * normal(rng), config.city_spread_km * normal(rng));
    } else {
      loc = {std::asin(2.0 * unif(rng) - 1.0) * 180.0 / std::numbers::pi, unif(rng) * 360.0 - 180.0};
      loc.lon_deg = std::clamp(loc.lon_deg, -180.0, 180.0);
    }
    int label_city = city;
    if (label_city < 0 && !manifest.cities.empty()) {
      double best = 1e300;
      for (std::size_t c = 0; c < manifest.cities.size(); ++c) {
        const double d = geo::haversine_km(loc, manifest.cities[c].center);
        if (d < best) {
          best = d;
          label_city = static_cast<int>(c);
        }
      }
    }
    if (label_city >= 0) {
      rec.country = manifest.cities[static_cast<std::size_t>(label_city)].country;
      rec.town = manifest.cities[static_cast<std::size_t>(label_city)].name;
    }

    std::vector<double> feature(F, 0.0);
    for (auto t : chosen) {
      const std::vector<double>* proto = &shared[t];
      const auto& tag = manifest.tags[t];
      if (tag.type == TagType::LocationConditioned) {
        auto it = std::find(tag.cities.begin(), tag.cities.end(), city);
        proto = &regional[t][static_cast<std::size_t>(it - tag.cities.begin())];
      }
      for (std::size_t d = 0; d < F; ++d) feature[d] += (*proto)[d];
    }
    rec.feature.resize(F);
    const double scale = config.noise * std::exp(config.noise_spread * normal(rng));
    for (std::size_t d = 0; d < F; ++d) {
      rec.feature[d] = static_cast<float>(feature[d] / static_cast<double>(chosen.size()) +
                                          scale * normal(rng));
    }

    for (auto t : chosen) rec.tags.push_back(manifest.tags[t].label);
    for (const auto& f : manifest.filler_labels) {
      if (unif(rng) < config.filler_prob && rec.tags.size() < kMaxTagsPerPhoto) rec.tags.push_back(f);
    }
    if (unif(rng) < config.numeric_tag_prob && rec.tags.size() < kMaxTagsPerPhoto) {
      rec.tags.push_back(numeric_labels[std::uniform_int_distribution<std::size_t>(
          0, numeric_labels.size() - 1)(rng)]);
    }
    if (unif(rng) < config.overflow_fraction) {
      std::vector<std::string> extra = manifest.filler_labels;
      extra.insert(extra.end(), numeric_labels.begin(), numeric_labels.end());
      for (const auto& e : extra) {
        if (rec.tags.size() > kMaxTagsPerPhoto) break;
        if (std::find(rec.tags.begin(), rec.tags.end(), e) == rec.tags.end()) rec.tags.push_back(e);
      }
    }
    if (unif(rng) >= config.missing_location_fraction) rec.location = loc;

    manifest.image_city.emplace_back(id, city);
    corpus.records.push_back(std::move(rec));
  }
  // Filler tags get unstructured vectors so small corpora whose vocabulary
  // keeps some of them still have a complete table.
  {
    const auto rows = words.vectors.rows();
    const auto n = static_cast<nn::Index>(manifest.filler_labels.size());
    words.vectors.conservativeResize(rows + n, Eigen::NoChange);
    for (nn::Index i = 0; i < n; ++i) {
      words.labels.push_back(manifest.filler_labels[static_cast<std::size_t>(i)]);
      for (nn::Index j = 0; j < words.vectors.cols(); ++j) words.vectors(rows + i, j) = normal(rng);
    }
  }
  corpus.word_vectors = std::move(words);
  corpus.manifest = std::move(manifest);
  return corpus;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  const auto& c = m.config;
  j["config"] = {{"num_images", c.num_images},
                 {"num_tags", c.num_tags},
                 {"feature_dim", c.feature_dim},
                 {"word_dim", c.word_dim},
                 {"mix",
                  {{"place_name", c.mix.place_name},
                   {"location_conditioned", c.mix.location_conditioned},
                   {"location_invariant", c.mix.location_invariant}}},
                 {"num_cities", c.num_cities},
                 {"regions_per_tag", c.regions_per_tag},
                 {"city_spread_km", c.city_spread_km},
                 {"noise", c.noise},
                 {"noise_spread", c.noise_spread},
                 {"region_specificity", c.region_specificity},
                 {"mean_tags", c.mean_tags},
                 {"seed", c.seed}};
  for (const auto& city : m.cities) {
    j["cities"].push_back({{"name", city.name},
                           {"lat", city.center.lat_deg},
                           {"lon", city.center.lon_deg},
                           {"country", city.country},
                           {"spread_km", c.city_spread_km}});
  }
  for (const auto& t : m.tags) {
    j["tags"].push_back({{"label", t.label}, {"type", tag_type_name(t.type)}, {"cities", t.cities}});
  }
  j["filler_labels"] = m.filler_labels;
  for (const auto& [id, city] : m.image_city) j["images"].push_back({id, city});
  return j;
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << manifest_to_json(m).dump(1) << '\n';
}

}  // namespace locsens::data
