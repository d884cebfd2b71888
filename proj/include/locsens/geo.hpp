#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "locsens/error.hpp"

namespace locsens::geo {

/// Mean Earth radius (IUGG), km.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct GeoCoord {
  double lat_deg = 0.0;
  double lon_deg = 0.0;

  friend bool operator==(const GeoCoord&, const GeoCoord&) = default;
};

/// Coordinates mapped to the unit square. Longitude is circular: 0 and 1 are
/// the same meridian.
struct NormCoord {
  double u = 0.0;  // from latitude
  double v = 0.0;  // from longitude

  friend bool operator==(const NormCoord&, const NormCoord&) = default;
};

enum class Granularity { Continent, Country, Region, City, Street };

inline constexpr std::array<Granularity, 5> kGranularities = {
    Granularity::Continent, Granularity::Country, Granularity::Region,
    Granularity::City, Granularity::Street};

constexpr double threshold_km(Granularity level) {
  switch (level) {
    case Granularity::Continent: return 2500.0;
    case Granularity::Country: return 750.0;
    case Granularity::Region: return 200.0;
    case Granularity::City: return 25.0;
    case Granularity::Street: return 1.0;
  }
  return 0.0;
}

constexpr std::string_view granularity_name(Granularity level) {
  switch (level) {
    case Granularity::Continent: return "continent";
    case Granularity::Country: return "country";
    case Granularity::Region: return "region";
    case Granularity::City: return "city";
    case Granularity::Street: return "street";
  }
  return "";
}

inline std::optional<Granularity> parse_granularity(std::string_view name) {
  for (auto level : kGranularities) {
    if (granularity_name(level) == name) return level;
  }
  return std::nullopt;
}

inline bool is_valid(GeoCoord c) {
  return std::isfinite(c.lat_deg) && std::isfinite(c.lon_deg) &&
         c.lat_deg >= -90.0 && c.lat_deg <= 90.0 && c.lon_deg >= -180.0 &&
         c.lon_deg <= 180.0;
}

inline bool is_valid(NormCoord n) {
  return n.u >= 0.0 && n.u < 1.0 && n.v >= 0.0 && n.v < 1.0;
}

inline void validate(GeoCoord c) {
  if (!is_valid(c)) {
    throw ValidationError("coordinate out of range: lat=" +
                          std::to_string(c.lat_deg) +
                          " lon=" + std::to_string(c.lon_deg));
  }
}

namespace detail {
// Reduces x into [0, 1). Values that round up to exactly 1 wrap to 0.
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}
}  // namespace detail

inline NormCoord normalize_coord(GeoCoord c) {
  validate(c);
  return {detail::wrap_unit((c.lat_deg + 90.0) / 180.0),
          detail::wrap_unit((c.lon_deg + 180.0) / 360.0)};
}

inline GeoCoord denormalize_coord(NormCoord n) {
  if (!is_valid(n)) {
    throw ValidationError("normalized coordinate outside [0,1)^2");
  }
  return {n.u * 180.0 - 90.0, n.v * 360.0 - 180.0};
}

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
inline double haversine_km(GeoCoord a, GeoCoord b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi1 = a.lat_deg * kRad;
  const double phi2 = b.lat_deg * kRad;
  const double dphi = (b.lat_deg - a.lat_deg) * kRad;
  const double dlambda = (b.lon_deg - a.lon_deg) * kRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

/// Strict: a pair exactly at the threshold distance is not within it.
inline bool within_threshold(GeoCoord a, GeoCoord b, Granularity level) {
  return haversine_km(a, b) < threshold_km(level);
}

/// Draws one location from an axis-independent Gaussian around `mean` and
/// reduces both axes modulo 1. Latitude wraps too, pole to pole.
template <class Rng>
NormCoord sample_location(NormCoord mean, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ValidationError("sigma must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double du = normal(rng);
  const double dv = normal(rng);
  return {detail::wrap_unit(mean.u + sigma * du),
          detail::wrap_unit(mean.v + sigma * dv)};
}

/// Moves `origin` by the given offsets in km along north and east.
inline GeoCoord offset_km(GeoCoord origin, double north_km, double east_km) {
  constexpr double kDegPerKm = 180.0 / (std::numbers::pi * kEarthRadiusKm);
  double lat = origin.lat_deg + north_km * kDegPerKm;
  const double coslat =
      std::max(1e-6, std::cos(origin.lat_deg * std::numbers::pi / 180.0));
  double lon = origin.lon_deg + east_km * kDegPerKm / coslat;
  lat = std::clamp(lat, -90.0, 90.0);
  lon = std::fmod(lon + 180.0, 360.0);
  if (lon < 0.0) lon += 360.0;
  return {lat, lon - 180.0};
}

}  // namespace locsens::geo
