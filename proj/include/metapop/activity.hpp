#pragma once

// Daily itineraries per smart card, the home/work/non-work motif classifier,
// the recreational fraction and the afternoon top-destination ranking.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

/// Clock thresholds (minutes after midnight) and the second-workplace share.
struct ActivityRules {
  int depart_before = 10 * 60;  ///< first trip must start before this to be a worker
  int return_after = 17 * 60;   ///< and some trip must start at or after this
  int nonwork_after = 16 * 60;  ///< other stops arriving at or after this are non-work
  double second_work_share = 0.25;
};

struct Visit {
  StationId station = 0;
  Timestamp arrival;    ///< checkout of the trip that ends here
  Timestamp departure;  ///< checkin of the next trip
  int dwell_minutes() const {
    return static_cast<int>(departure.minutes_since_epoch() - arrival.minutes_since_epoch());
  }
};

struct DailySchedule {
  std::string card_id;
  Date date{};
  std::vector<TripRecord> trips;  ///< time ordered
  std::vector<Visit> visits;      ///< stays between consecutive trips
  bool consistent = true;         ///< false if a trip does not start where the previous ended

  StationId origin() const { return trips.front().checkin_station; }
  StationId destination() const { return trips.back().checkout_station; }
};

/// Groups trips by (card, check-in date), orders each day's trips by time and
/// derives the visits between them.
inline std::vector<DailySchedule> build_schedules(const std::vector<TripRecord>& trips) {
  std::map<std::pair<Date, std::string>, std::vector<TripRecord>> groups;
  for (const auto& t : trips) groups[{t.checkin_time.date, t.card_id}].push_back(t);
  std::vector<DailySchedule> out;
  out.reserve(groups.size());
  for (auto& [key, day] : groups) {
    std::sort(day.begin(), day.end(), [](const TripRecord& a, const TripRecord& b) {
      return std::tie(a.checkin_time, a.checkout_time, a.checkin_station, a.checkout_station) <
             std::tie(b.checkin_time, b.checkout_time, b.checkin_station, b.checkout_station);
    });
    DailySchedule s{key.second, key.first, std::move(day), {}, true};
    for (std::size_t k = 0; k + 1 < s.trips.size(); ++k) {
      const auto& a = s.trips[k];
      const auto& b = s.trips[k + 1];
      if (a.checkout_station != b.checkin_station || b.checkin_time < a.checkout_time) s.consistent = false;
      s.visits.push_back({a.checkout_station, a.checkout_time, b.checkin_time});
    }
    out.push_back(std::move(s));
  }
  return out;
}

enum class Motif { HWH, HWEH, HW1W2H, HWE1E2H, HW1W2EH, HWEWH, NonWorker, Unclassified };

inline constexpr std::array<std::string_view, 8> kMotifNames = {
    "HWH", "HWEH", "HW1W2H", "HWE1E2H", "HW1W2EH", "HWEWH", "NonWorker", "Unclassified"};

inline std::string_view motif_name(Motif m) { return kMotifNames[static_cast<std::size_t>(m)]; }

enum class Role { home, work, nonwork, other };

struct MotifLabel {
  Motif motif = Motif::Unclassified;
  std::vector<Role> roles;  ///< one per visit

  /// Workers are the six itinerary motifs.
  bool worker() const { return static_cast<int>(motif) <= static_cast<int>(Motif::HWEWH); }
  bool extra_stops() const {
    return motif == Motif::HWEH || motif == Motif::HWE1E2H || motif == Motif::HW1W2EH || motif == Motif::HWEWH;
  }
};

inline MotifLabel classify(const DailySchedule& s, const ActivityRules& rules = {}) {
  MotifLabel label;
  label.roles.assign(s.visits.size(), Role::other);
  if (s.trips.empty() || !s.consistent) return label;

  const bool early = s.trips.front().checkin_time.minute_of_day < rules.depart_before;
  const bool late = std::any_of(s.trips.begin(), s.trips.end(), [&](const TripRecord& t) {
    return t.checkin_time.minute_of_day >= rules.return_after;
  });
  if (!early || !late || s.trips.size() < 2 || s.origin() != s.destination()) {
    label.motif = Motif::NonWorker;
    return label;
  }
  const StationId home = s.origin();

  // Per-station dwell: total, and the part before the non-work cut-off.
  struct Stay {
    StationId station;
    int dwell = 0;
    int dwell_before_cutoff = 0;
    Timestamp first_arrival;
  };
  std::vector<Stay> stays;
  int total_before = 0;
  for (const auto& v : s.visits) {
    if (v.station == home) return label;  // midday return home: not one of the motifs
    auto it = std::find_if(stays.begin(), stays.end(), [&](const Stay& x) { return x.station == v.station; });
    if (it == stays.end()) {
      stays.push_back({v.station, 0, 0, v.arrival});
      it = stays.end() - 1;
    }
    const std::int64_t cutoff = v.arrival.minutes_since_epoch() - v.arrival.minute_of_day + rules.nonwork_after;
    const auto before = static_cast<int>(std::clamp<std::int64_t>(
        std::min(v.departure.minutes_since_epoch(), cutoff) - v.arrival.minutes_since_epoch(), 0,
        v.dwell_minutes()));
    it->dwell += v.dwell_minutes();
    it->dwell_before_cutoff += before;
    total_before += before;
  }
  if (stays.empty()) return label;

  auto work = std::min_element(stays.begin(), stays.end(), [](const Stay& a, const Stay& b) {
    if (a.dwell != b.dwell) return a.dwell > b.dwell;
    return a.first_arrival < b.first_arrival;
  });
  std::vector<StationId> work_stations{work->station};
  for (const auto& st : stays)
    if (st.station != work->station && total_before > 0 &&
        st.dwell_before_cutoff >= rules.second_work_share * total_before)
      work_stations.push_back(st.station);
  if (work_stations.size() > 2) return label;

  std::string pattern;
  for (std::size_t k = 0; k < s.visits.size(); ++k) {
    const auto& v = s.visits[k];
    if (std::find(work_stations.begin(), work_stations.end(), v.station) != work_stations.end()) {
      label.roles[k] = Role::work;
      pattern += 'W';
    } else if (v.arrival.minute_of_day >= rules.nonwork_after) {
      label.roles[k] = Role::nonwork;
      pattern += 'E';
    } else {
      return label;
    }
  }
  if (work_stations.size() == 1) {
    if (pattern == "W") label.motif = Motif::HWH;
    else if (pattern == "WE") label.motif = Motif::HWEH;
    else if (pattern == "WEE") label.motif = Motif::HWE1E2H;
    else if (pattern == "WEW") label.motif = Motif::HWEWH;
  } else {
    if (pattern == "WW") label.motif = Motif::HW1W2H;
    else if (pattern == "WWE") label.motif = Motif::HW1W2EH;
  }
  return label;
}

struct RecreationRow {
  Date date{};
  int workers = 0;           ///< N_W
  int with_extra_stops = 0;  ///< N_E
  std::optional<double> rho;
};

/// rho = N_E / N_W over the labels of one day; undefined without workers.
inline RecreationRow recreational_fraction(const std::vector<MotifLabel>& labels, Date date = {}) {
  RecreationRow row{date, 0, 0, std::nullopt};
  for (const auto& l : labels) {
    if (!l.worker()) continue;
    ++row.workers;
    if (l.extra_stops()) ++row.with_extra_stops;
  }
  if (row.workers > 0) row.rho = static_cast<double>(row.with_extra_stops) / row.workers;
  return row;
}

struct DailyActivity {
  Date date{};
  std::array<int, kMotifNames.size()> motif_counts{};
  RecreationRow recreation;
};

/// Classifies every schedule and tallies motifs and rho per date.
inline std::vector<DailyActivity> summarize_activity(const std::vector<DailySchedule>& schedules,
                                                     const ActivityRules& rules = {}) {
  std::map<Date, std::vector<MotifLabel>> by_date;
  for (const auto& s : schedules) by_date[s.date].push_back(classify(s, rules));
  std::vector<DailyActivity> out;
  for (const auto& [date, labels] : by_date) {
    DailyActivity d;
    d.date = date;
    for (const auto& l : labels) ++d.motif_counts[static_cast<std::size_t>(l.motif)];
    d.recreation = recreational_fraction(labels, date);
    out.push_back(d);
  }
  return out;
}

struct Destination {
  int rank = 0;
  StationId station = 0;
  double influx = 0.0;
};

/// Locations ranked by column sum (influx), largest first, ties by station id.
inline std::vector<Destination> top_destinations(const FlowMatrix& afternoon, std::size_t k) {
  std::vector<Destination> all;
  for (std::size_t j = 0; j < afternoon.size(); ++j)
    all.push_back({0, static_cast<StationId>(j), afternoon.col_sum(j)});
  std::stable_sort(all.begin(), all.end(), [](const Destination& a, const Destination& b) { return a.influx > b.influx; });
  all.resize(std::min(k, all.size()));
  for (std::size_t r = 0; r < all.size(); ++r) all[r].rank = static_cast<int>(r) + 1;
  return all;
}

}  // namespace metapop
