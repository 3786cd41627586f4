#pragma once

// Trip record ingestion: station registry, district populations, trip CSV
// parsing with a rejection tally, period assignment and same-period filtering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/csv.hpp"

namespace metapop {

inline constexpr std::string_view kTripsHeader =
    "card_id,checkin_time,checkin_station,checkout_time,checkout_station,fare";
inline constexpr std::string_view kStationsHeader = "station_id,name,district_id,lat,lon";
inline constexpr std::string_view kDistrictsHeader = "district_id,population";

struct TripRecord {
  std::string card_id;
  Timestamp checkin_time;
  StationId checkin_station = 0;
  Timestamp checkout_time;
  StationId checkout_station = 0;
  double fare = 0.0;

  friend bool operator==(const TripRecord&, const TripRecord&) = default;
};

struct Station {
  StationId id = 0;
  std::string name;
  DistrictId district = 0;
  double latitude = 0.0;
  double longitude = 0.0;
};

/// Stations indexed densely by id: stations()[k].id == k.
class StationRegistry {
 public:
  StationRegistry() = default;

  explicit StationRegistry(std::vector<Station> stations) : stations_(std::move(stations)) {
    std::sort(stations_.begin(), stations_.end(),
              [](const Station& a, const Station& b) { return a.id < b.id; });
    for (std::size_t k = 0; k < stations_.size(); ++k)
      if (stations_[k].id != static_cast<StationId>(k))
        throw Error("station ids must be dense and unique, expected " + std::to_string(k) +
                    " got " + std::to_string(stations_[k].id));
  }

  static StationRegistry read_csv(std::istream& in) {
    std::vector<Station> stations;
    csv::for_each_row(in, kStationsHeader, "stations", [&](std::size_t line, const auto& f) {
      auto fail = [&](const char* why) {
        throw Error("stations line " + std::to_string(line) + ": " + why);
      };
      if (f.size() != 5) fail("expected 5 fields");
      auto id = csv::parse_int<StationId>(f[0]);
      auto district = csv::parse_int<DistrictId>(f[2]);
      auto lat = csv::parse_double(f[3]);
      auto lon = csv::parse_double(f[4]);
      if (!id || *id < 0) fail("bad station id");
      if (!district) fail("bad district id");
      if (!lat || !lon || std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0) fail("bad coordinates");
      stations.push_back({*id, f[1], *district, *lat, *lon});
    });
    return StationRegistry(std::move(stations));
  }

  void write_csv(std::ostream& out) const {
    out << kStationsHeader << '\n';
    for (const auto& s : stations_)
      out << s.id << ',' << csv::escape(s.name) << ',' << s.district << ','
          << format_double(s.latitude) << ',' << format_double(s.longitude) << '\n';
  }

  std::size_t size() const { return stations_.size(); }
  bool contains(StationId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  const Station& operator[](StationId id) const { return stations_.at(static_cast<std::size_t>(id)); }
  const std::vector<Station>& stations() const { return stations_; }

 private:
  std::vector<Station> stations_;
};

struct DistrictPopulation {
  DistrictId district = 0;
  std::int64_t population = 0;
};

inline std::vector<DistrictPopulation> read_districts_csv(std::istream& in) {
  std::vector<DistrictPopulation> rows;
  csv::for_each_row(in, kDistrictsHeader, "districts", [&](std::size_t line, const auto& f) {
    auto id = f.size() == 2 ? csv::parse_int<DistrictId>(f[0]) : std::nullopt;
    auto pop = f.size() == 2 ? csv::parse_int<std::int64_t>(f[1]) : std::nullopt;
    if (!id || !pop || *pop < 0)
      throw Error("districts line " + std::to_string(line) + ": malformed row");
    rows.push_back({*id, *pop});
  });
  return rows;
}

inline void write_districts_csv(std::ostream& out, const std::vector<DistrictPopulation>& rows) {
  out << kDistrictsHeader << '\n';
  for (const auto& r : rows) out << r.district << ',' << r.population << '\n';
}

/// Residents per location.
struct PopulationVector {
  std::vector<std::int64_t> persons;

  std::size_t size() const { return persons.size(); }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto p : persons) t += p;
    return t;
  }
  std::vector<double> as_doubles() const { return {persons.begin(), persons.end()}; }
};

/// Splits each district's population evenly over its stations. Integer
/// remainders go one person each to the lowest station ids of the district
/// (largest-remainder apportionment with equal fractional parts), so district
/// totals are conserved exactly.
inline PopulationVector allocate_population(const std::vector<DistrictPopulation>& districts,
                                            const StationRegistry& registry) {
  std::map<DistrictId, std::int64_t> pop;
  for (const auto& d : districts) {
    if (!pop.emplace(d.district, d.population).second)
      throw Error("duplicate district " + std::to_string(d.district));
  }
  std::map<DistrictId, std::vector<StationId>> members;
  for (const auto& s : registry.stations()) members[s.district].push_back(s.id);

  PopulationVector out{std::vector<std::int64_t>(registry.size(), 0)};
  for (const auto& [district, stations] : members) {
    auto it = pop.find(district);
    if (it == pop.end())
      throw Error("district " + std::to_string(district) + " has stations but no population row");
    const auto count = static_cast<std::int64_t>(stations.size());
    const std::int64_t base = it->second / count;
    const std::int64_t remainder = it->second % count;
    for (std::int64_t k = 0; k < count; ++k)
      out.persons[static_cast<std::size_t>(stations[static_cast<std::size_t>(k)])] =
          base + (k < remainder ? 1 : 0);
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.persons[i] <= 0)
      throw Error("location " + std::to_string(i) + " receives no residents");
  return out;
}

// ---------------------------------------------------------------------------
// Trips

struct Rejection {
  std::size_t line = 0;
  std::string reason;
};

struct TripParseResult {
  std::vector<TripRecord> trips;
  std::vector<Rejection> rejections;
  std::size_t rows = 0;  ///< data rows seen (accepted + rejected)
};

inline TripParseResult parse_trips(std::istream& in, const StationRegistry& registry) {
  TripParseResult result;
  csv::for_each_row(in, kTripsHeader, "trips", [&](std::size_t line, const auto& f) {
    ++result.rows;
    auto reject = [&](std::string why) { result.rejections.push_back({line, std::move(why)}); };
    if (f.size() != 6) return reject("expected 6 fields");
    if (f[0].empty()) return reject("empty card id");
    auto tin = parse_timestamp(f[1]);
    auto tout = parse_timestamp(f[3]);
    if (!tin || !tout) return reject("unparseable timestamp");
    auto sin = csv::parse_int<StationId>(f[2]);
    auto sout = csv::parse_int<StationId>(f[4]);
    if (!sin || !sout) return reject("bad station id");
    if (!registry.contains(*sin) || !registry.contains(*sout)) return reject("unknown station");
    if (*tout < *tin) return reject("checkout before checkin");
    auto fare = csv::parse_double(f[5]);
    if (!fare || *fare < 0.0) return reject("bad fare");
    result.trips.push_back({f[0], *tin, *sin, *tout, *sout, *fare});
  });
  return result;
}

inline void write_trip_row(std::ostream& out, const TripRecord& t) {
  out << csv::escape(t.card_id) << ',' << format_timestamp(t.checkin_time) << ','
      << t.checkin_station << ',' << format_timestamp(t.checkout_time) << ','
      << t.checkout_station << ',' << format_double(t.fare) << '\n';
}

inline void write_trips_csv(std::ostream& out, const std::vector<TripRecord>& trips) {
  out << kTripsHeader << '\n';
  for (const auto& t : trips) write_trip_row(out, t);
}

/// Keeps trips that start and end inside the same period of the same
/// calendar day. Trips spanning midnight or the overnight gap are dropped.
inline std::vector<TripRecord> filter_same_period(const std::vector<TripRecord>& trips) {
  std::vector<TripRecord> kept;
  kept.reserve(trips.size());
  for (const auto& t : trips) {
    if (t.checkin_time.date != t.checkout_time.date) continue;
    auto a = assign_period(t.checkin_time);
    auto b = assign_period(t.checkout_time);
    if (a && b && *a == *b) kept.push_back(t);
  }
  return kept;
}

/// Trips whose check-in falls inside the week.
inline std::vector<TripRecord> select_week(const std::vector<TripRecord>& trips, const Week& week) {
  std::vector<TripRecord> kept;
  for (const auto& t : trips)
    if (week.contains(t.checkin_time.date)) kept.push_back(t);
  return kept;
}

}  // namespace metapop
