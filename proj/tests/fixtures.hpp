#pragma once

// Hand-built daily itineraries, one per motif plus a non-worker and an
// unclassified day. Station 0 is home, 1 and 2 are workplaces, 3 and 4 are
// evening stops. Shared by the unit tests and the acceptance suite.

#include <stdexcept>
#include <string>
#include <vector>

#include "metapop/activity.hpp"

namespace fixtures {

inline metapop::TripRecord leg(const std::string& card, metapop::StationId from, metapop::StationId to,
                               const char* in, const char* out, int day_offset = 0) {
  const auto date = *metapop::parse_date("2015-04-17") + std::chrono::days{day_offset};
  auto at = [&](const char* hhmm) {
    return metapop::Timestamp{date, std::stoi(std::string(hhmm, 2)) * 60 + std::stoi(std::string(hhmm + 3, 2))};
  };
  return {card, at(in), from, at(out), to, 3.0};
}

struct MotifFixture {
  std::string name;
  metapop::Motif expected;
  std::vector<metapop::TripRecord> trips;
};

inline std::vector<MotifFixture> motif_fixtures() {
  using metapop::Motif;
  std::vector<MotifFixture> f;
  auto add = [&](std::string name, Motif m, std::vector<std::tuple<int, int, const char*, const char*>> legs) {
    MotifFixture x{name, m, {}};
    for (auto [a, b, in, out] : legs) x.trips.push_back(leg(name, a, b, in, out));
    f.push_back(std::move(x));
  };
  add("HWH", Motif::HWH, {{0, 1, "07:50", "08:20"}, {1, 0, "18:30", "19:00"}});
  add("HWEH", Motif::HWEH, {{0, 1, "08:00", "08:30"}, {1, 3, "17:30", "17:50"}, {3, 0, "18:30", "19:00"}});
  add("HW1W2H", Motif::HW1W2H, {{0, 1, "08:00", "08:30"}, {1, 2, "12:00", "12:20"}, {2, 0, "18:00", "18:30"}});
  add("HWE1E2H", Motif::HWE1E2H,
      {{0, 1, "08:00", "08:30"}, {1, 3, "17:00", "17:20"}, {3, 4, "18:00", "18:20"}, {4, 0, "19:00", "19:30"}});
  add("HW1W2EH", Motif::HW1W2EH,
      {{0, 1, "08:00", "08:30"}, {1, 2, "12:00", "12:20"}, {2, 3, "17:00", "17:20"}, {3, 0, "18:00", "18:30"}});
  add("HWEWH", Motif::HWEWH,
      {{0, 1, "08:00", "08:30"}, {1, 3, "16:30", "16:45"}, {3, 1, "17:30", "17:45"}, {1, 0, "19:00", "19:30"}});
  add("NonWorker", Motif::NonWorker, {{0, 1, "11:00", "11:30"}, {1, 0, "18:00", "18:30"}});
  add("Unclassified", Motif::Unclassified, {{0, 1, "08:00", "08:30"}, {2, 0, "18:00", "18:30"}});
  return f;
}

inline MotifFixture fixture(const std::string& name) {
  for (auto& f : motif_fixtures())
    if (f.name == name) return f;
  throw std::out_of_range("no fixture " + name);
}

}  // namespace fixtures
