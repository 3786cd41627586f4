#pragma once

// On-disk form of the flow matrices: one `from,to,rate` CSV of nonzero
// entries per hour / period, the weekly average, and a JSON manifest.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metapop/core.hpp"
#include "metapop/csv.hpp"
#include "metapop/mobility_matrices.hpp"

namespace metapop {

namespace fs = std::filesystem;

inline constexpr std::string_view kMatrixHeader = "from,to,rate";

inline void write_matrix_csv(std::ostream& out, const FlowMatrix& m) {
  out << kMatrixHeader << '\n';
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j)
      if (m(i, j) != 0.0) out << i << ',' << j << ',' << format_double(m(i, j)) << '\n';
}

inline FlowMatrix read_matrix_csv(std::istream& in, std::size_t locations, std::string_view what = "matrix") {
  FlowMatrix m(locations);
  csv::for_each_row(in, kMatrixHeader, what, [&](std::size_t line, const auto& f) {
    auto i = f.size() == 3 ? csv::parse_int<std::size_t>(f[0]) : std::nullopt;
    auto j = f.size() == 3 ? csv::parse_int<std::size_t>(f[1]) : std::nullopt;
    auto v = f.size() == 3 ? csv::parse_double(f[2]) : std::nullopt;
    if (!i || !j || !v || *i >= locations || *j >= locations || *v < 0.0)
      throw Error(std::string(what) + " line " + std::to_string(line) + ": malformed entry");
    m(*i, *j) = *v;
  });
  return m;
}

inline std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

inline std::string hour_file(int h) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "h%03d.csv", h);
  return buf;
}

inline std::string period_file(int p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%02d.csv", p);
  return buf;
}

struct MatrixSet {
  Week week;
  HourlyFlows hourly;
  std::vector<FlowMatrix> periods;
  FlowMatrix weekly;

  std::size_t locations() const { return weekly.size(); }
};

inline void write_matrix_set(const fs::path& dir, const MatrixSet& set) {
  for (int h = 0; h < kHoursPerWeek; ++h) {
    auto out = open_output(dir / "hourly" / hour_file(h));
    write_matrix_csv(out, set.hourly.hours[static_cast<std::size_t>(h)]);
  }
  for (int p = 0; p < kPeriodsPerWeek; ++p) {
    auto out = open_output(dir / "periods" / period_file(p));
    write_matrix_csv(out, set.periods[static_cast<std::size_t>(p)]);
  }
  {
    auto out = open_output(dir / "weekly.csv");
    write_matrix_csv(out, set.weekly);
  }
  nlohmann::ordered_json manifest;
  manifest["locations"] = set.locations();
  manifest["week_first"] = format_date(set.week.first);
  manifest["week_last"] = format_date(set.week.last);
  auto clamps = nlohmann::ordered_json::array();
  for (const auto& c : set.hourly.clamps)
    clamps.push_back({{"hour_of_week", c.hour_of_week}, {"location", c.location}, {"row_sum", c.row_sum}});
  manifest["clamp_warnings"] = clamps;
  manifest["hourly"] = "hourly/hNNN.csv, hour of week 0 = Monday 00:00";
  manifest["periods"] = "periods/pNN.csv, index = 4 * day + period";
  auto out = open_output(dir / "matrices.json");
  out << manifest.dump(2) << '\n';
}

inline MatrixSet read_matrix_set(const fs::path& dir) {
  auto in = open_input(dir / "matrices.json");
  const auto manifest = nlohmann::json::parse(in);
  MatrixSet set;
  const auto n = manifest.at("locations").get<std::size_t>();
  auto first = parse_date(manifest.at("week_first").get<std::string>());
  auto last = parse_date(manifest.at("week_last").get<std::string>());
  if (!first || !last) throw Error("matrix manifest has malformed week dates");
  set.week = Week::make(*first, *last, false);
  for (const auto& c : manifest.at("clamp_warnings"))
    set.hourly.clamps.push_back({c.at("hour_of_week").get<int>(), c.at("location").get<StationId>(),
                                 c.at("row_sum").get<double>()});
  for (int h = 0; h < kHoursPerWeek; ++h) {
    auto f = open_input(dir / "hourly" / hour_file(h));
    set.hourly.hours.push_back(read_matrix_csv(f, n, hour_file(h)));
  }
  for (int p = 0; p < kPeriodsPerWeek; ++p) {
    auto f = open_input(dir / "periods" / period_file(p));
    set.periods.push_back(read_matrix_csv(f, n, period_file(p)));
  }
  auto w = open_input(dir / "weekly.csv");
  set.weekly = read_matrix_csv(w, n, "weekly.csv");
  return set;
}

/// 64-bit FNV-1a over a file's bytes.
inline std::uint64_t fnv1a_file(const fs::path& path) {
  auto in = open_input(path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace metapop
