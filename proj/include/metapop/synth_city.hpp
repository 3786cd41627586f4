#pragma once

// Synthetic cities: station layouts, district populations and a week of
// smart-card trips with gravity-model flows, commuter itineraries, a weekday
// rush-hour profile and an optional Friday-evening bridge between clusters.
//
// Randomness: std::mt19937_64 seeded with SynthConfig::seed. Uniform deviates
// take the top 53 bits of each draw; Poisson counts use sequential inversion
// (means above 500 are split into chunks). Both are spelled out here so other
// implementations can reproduce the distributions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

enum class Layout { grid, ring, two_cluster };

inline std::optional<Layout> parse_layout(std::string_view s) {
  if (s == "grid") return Layout::grid;
  if (s == "ring") return Layout::ring;
  if (s == "two-cluster" || s == "two_cluster") return Layout::two_cluster;
  return std::nullopt;
}

inline std::string_view layout_name(Layout l) {
  switch (l) {
    case Layout::grid: return "grid";
    case Layout::ring: return "ring";
    case Layout::two_cluster: return "two-cluster";
  }
  return "?";
}

struct SynthConfig {
  int locations = 20;
  std::uint64_t seed = 1;
  Layout layout = Layout::two_cluster;
  double gravity_exponent = 2.0;
  double daily_trips = 20000.0;        ///< expected background trips on a weekday
  double weekend_volume = 0.8;         ///< weekend background volume relative to weekdays
  double friday_bridge = 1.0;          ///< multiplier on inter-cluster trips, Friday from 16:00
  double commuter_fraction = 0.01;     ///< share of residents with a home/work itinerary
  double station_population = 20000;  ///< mean residents per station
  double population_jitter = 0.5;      ///< residents vary uniformly by +-jitter around the mean
  double core_density = 0.0;           ///< extra residents towards the layout centre; 1 doubles the core
  double spacing_km = 2.0;
  double cluster_gap_km = 12.0;
  double center_lat = 31.2235;
  double center_lon = 121.4452;
  Date week_start = Date{std::chrono::year{2015} / std::chrono::April / 13};

  void validate() const {
    if (locations < 2) throw Error("a synthetic city needs at least two locations");
    if (daily_trips < 0 || commuter_fraction < 0 || commuter_fraction > 1 || friday_bridge < 0 ||
        station_population < 1 || population_jitter < 0 || population_jitter >= 1 || weekend_volume < 0 || core_density < 0)
      throw Error("invalid synthetic city volumes");
    if (std::chrono::weekday(week_start).iso_encoding() != 1) throw Error("synthetic weeks start on a Monday");
  }
};

struct SynthCity {
  StationRegistry registry;
  std::vector<DistrictPopulation> districts;
  std::vector<TripRecord> trips;
  std::vector<int> cluster;  ///< layout cluster per station (0 unless two-cluster)
  std::vector<double> x_km, y_km;
  Week week;
};

namespace detail {

class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }
  std::int64_t poisson(double mean) {
    std::int64_t total = 0;
    while (mean > 500.0) {
      total += poisson_small(500.0);
      mean -= 500.0;
    }
    return total + poisson_small(mean);
  }
  /// Index drawn proportionally to non-negative weights.
  std::size_t pick(const std::vector<double>& w) {
    double sum = 0.0;
    for (double v : w) sum += v;
    double u = uniform() * sum;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (u < w[k]) return k;
      u -= w[k];
    }
    for (std::size_t k = w.size(); k > 0; --k)
      if (w[k - 1] > 0) return k - 1;
    return 0;
  }

 private:
  std::int64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    double p = std::exp(-mean), cdf = p;
    const double u = uniform();
    std::int64_t k = 0;
    while (u > cdf && k < 100000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }
  std::mt19937_64 engine_;
};

// Relative background volume per clock hour (hour 5 covers only 05:30-06:00).
inline constexpr std::array<double, 24> kWeekdayProfile = {0, 0, 0, 0, 0, 0.3, 1.0, 3.0, 3.0, 1.5, 0.8, 0.8,
                                                           0.8, 0.8, 0.8, 0.8, 1.5, 3.0, 3.0, 1.5, 0.8, 0.5, 0.3, 0.2};
inline constexpr std::array<double, 24> kWeekendProfile = {0, 0, 0, 0, 0, 0.1, 0.4, 0.6, 0.8, 1.0, 1.5, 1.5,
                                                           1.5, 1.5, 1.5, 1.5, 1.3, 1.3, 1.3, 1.3, 1.3, 0.6, 0.4, 0.3};
// Chance that a commuter stops somewhere on the way home, Monday first.
inline constexpr std::array<double, 7> kRecreationChance = {0.20, 0.22, 0.20, 0.25, 0.35, 0.45, 0.35};

inline int period_end_minute(int minute_of_day) {
  auto p = period_of_hour(minute_of_day / 60);
  return p ? kPeriodHours[static_cast<std::size_t>(*p)].last * 60 : minute_of_day + 1;
}

}  // namespace detail

/// Deterministic in `config.seed`.
inline SynthCity generate_city(const SynthConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.locations);
  detail::SynthRng rng(config.seed);
  SynthCity city;
  city.week = Week::make(config.week_start, config.week_start + std::chrono::days{6});
  city.cluster.assign(n, 0);
  city.x_km.assign(n, 0.0);
  city.y_km.assign(n, 0.0);

  // --- layout and districts
  std::vector<DistrictId> district(n, 0);
  auto place_grid = [&](std::size_t first, std::size_t count, double cx, double cy) {
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
    const std::size_t rows = (count + cols - 1) / cols;
    for (std::size_t k = 0; k < count; ++k) {
      city.x_km[first + k] = cx + (static_cast<double>(k % cols) - (static_cast<double>(cols) - 1) / 2) * config.spacing_km;
      city.y_km[first + k] = cy + (static_cast<double>(k / cols) - (static_cast<double>(rows) - 1) / 2) * config.spacing_km;
      district[first + k] = static_cast<DistrictId>(k / cols);
    }
  };
  switch (config.layout) {
    case Layout::grid:
      place_grid(0, n, 0.0, 0.0);
      break;
    case Layout::ring: {
      const double radius = static_cast<double>(n) * config.spacing_km / (2 * std::numbers::pi);
      for (std::size_t k = 0; k < n; ++k) {
        const double a = 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        city.x_km[k] = radius * std::cos(a);
        city.y_km[k] = radius * std::sin(a);
        district[k] = static_cast<DistrictId>(k / 4);
      }
      break;
    }
    case Layout::two_cluster: {
      const std::size_t half = (n + 1) / 2;
      place_grid(0, half, -config.cluster_gap_km / 2, 0.0);
      place_grid(half, n - half, config.cluster_gap_km / 2, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        city.cluster[k] = k < half ? 0 : 1;
        district[k] = city.cluster[k];
      }
      break;
    }
  }

  // Residents: jittered per station, then pooled per district. Allocation
  // spreads each district evenly again, as for real data.
  std::map<DistrictId, std::int64_t> district_pop;
  for (std::size_t k = 0; k < n; ++k) {
    double f = 1.0 + config.population_jitter * (2.0 * rng.uniform() - 1.0);
    if (config.core_density > 0.0) {
      // Gaussian bump around the centroid, width a quarter of the layout's span
      const double s = 0.25 * std::sqrt(static_cast<double>(n)) * config.spacing_km;
      const double r2 = city.x_km[k] * city.x_km[k] + city.y_km[k] * city.y_km[k];
      f *= 1.0 + config.core_density * std::exp(-r2 / (2 * s * s));
    }
    district_pop[district[k]] += static_cast<std::int64_t>(std::llround(config.station_population * f));
  }
  for (const auto& [d, p] : district_pop) city.districts.push_back({d, p});

  std::vector<Station> stations;
  const double km_per_deg_lat = 6371.0 * std::numbers::pi / 180.0;
  const double km_per_deg_lon = km_per_deg_lat * std::cos(config.center_lat * std::numbers::pi / 180.0);
  for (std::size_t k = 0; k < n; ++k)
    stations.push_back({static_cast<StationId>(k), "S" + std::to_string(k), district[k],
                        config.center_lat + city.y_km[k] / km_per_deg_lat,
                        config.center_lon + city.x_km[k] / km_per_deg_lon});
  city.registry = StationRegistry(std::move(stations));
  const auto pop = allocate_population(city.districts, city.registry);

  // --- gravity weights
  const double floor_km = 0.5 * config.spacing_km;
  std::vector<double> dist(n * n, 0.0), gravity(n * n, 0.0);
  double gravity_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = std::max(floor_km, std::hypot(city.x_km[i] - city.x_km[j], city.y_km[i] - city.y_km[j]));
      dist[i * n + j] = d;
      gravity[i * n + j] = static_cast<double>(pop.persons[i]) * static_cast<double>(pop.persons[j]) /
                           std::pow(d, config.gravity_exponent);
      gravity_sum += gravity[i * n + j];
    }
  auto travel_minutes = [&](std::size_t i, std::size_t j) {
    return std::min(60, 4 + static_cast<int>(std::lround(1.5 * dist[i * n + j])));
  };
  auto make_trip = [&](std::string card, Date date, int checkin, std::size_t from, std::size_t to) {
    const int checkout = std::min(checkin + travel_minutes(from, to), detail::period_end_minute(checkin) - 1);
    return TripRecord{std::move(card), Timestamp{date, checkin}, static_cast<StationId>(from),
                      Timestamp{date, std::max(checkin, checkout)}, static_cast<StationId>(to),
                      3.0 + std::round(dist[from * n + to])};
  };

  // --- background trips
  std::int64_t serial = 0;
  for (int day = 0; day < kDaysPerWeek; ++day) {
    const Date date = config.week_start + std::chrono::days{day};
    const bool weekend = day >= 5;
    const auto& profile = weekend ? detail::kWeekendProfile : detail::kWeekdayProfile;
    double profile_sum = 0.0;
    for (double w : profile) profile_sum += w;
    const double volume = config.daily_trips * (weekend ? config.weekend_volume : 1.0);
    for (int hour = 5; hour < 24; ++hour) {
      const double share = volume * profile[static_cast<std::size_t>(hour)] / profile_sum;
      const int slot_start = hour == 5 ? kServiceStartMinute : hour * 60;
      const int slot_len = hour * 60 + 60 - slot_start;
      const bool bridged = day == 4 && hour >= 16;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          double mean = share * gravity[i * n + j] / gravity_sum;
          if (bridged && city.cluster[i] != city.cluster[j]) mean *= config.friday_bridge;
          const auto count = rng.poisson(mean);
          for (std::int64_t c = 0; c < count; ++c) {
            const int checkin = slot_start + static_cast<int>(rng.uniform() * slot_len);
            city.trips.push_back(make_trip("b" + std::to_string(serial++), date, checkin, i, j));
          }
        }
    }
  }

  // --- commuters
  for (std::size_t home = 0; home < n; ++home) {
    const auto commuters = static_cast<std::int64_t>(
        std::llround(config.commuter_fraction * static_cast<double>(pop.persons[home])));
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = j == home ? 0.0 : gravity[home * n + j];
    for (std::int64_t c = 0; c < commuters; ++c) {
      const std::size_t work = rng.pick(w);
      const std::string card = "c" + std::to_string(home) + "-" + std::to_string(c);
      for (int day = 0; day < kDaysPerWeek; ++day) {
        const Date date = config.week_start + std::chrono::days{day};
        const bool goes = day < 5 || rng.uniform() < 0.15;
        const bool stops = rng.uniform() < detail::kRecreationChance[static_cast<std::size_t>(day)];
        if (!goes) continue;
        city.trips.push_back(make_trip(card, date, rng.uniform_int(6 * 60 + 30, 9 * 60 + 15), home, work));
        int leave = rng.uniform_int(17 * 60, 18 * 60 + 30);
        if (stops && n > 2) {
          std::vector<double> we(n);
          for (std::size_t j = 0; j < n; ++j) we[j] = (j == home || j == work) ? 0.0 : gravity[work * n + j];
          const std::size_t extra = rng.pick(we);
          auto first = make_trip(card, date, leave, work, extra);
          leave = first.checkout_time.minute_of_day + rng.uniform_int(45, 100);
          city.trips.push_back(std::move(first));
          city.trips.push_back(make_trip(card, date, leave, extra, home));
        } else {
          city.trips.push_back(make_trip(card, date, leave, work, home));
        }
      }
    }
  }

  std::stable_sort(city.trips.begin(), city.trips.end(), [](const TripRecord& a, const TripRecord& b) {
    return std::tie(a.checkin_time, a.card_id) < std::tie(b.checkin_time, b.card_id);
  });
  return city;
}

}  // namespace metapop
