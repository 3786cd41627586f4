#pragma once

// Location centralities on the week-averaged network and their correlation
// with the epidemic risk measures of a sweep.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/epidemic_engine.hpp"
#include "metapop/stats.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

struct Degrees {
  std::vector<double> in;   ///< column sums
  std::vector<double> out;  ///< row sums
};

inline Degrees degrees(const FlowMatrix& f) {
  Degrees d;
  for (std::size_t i = 0; i < f.size(); ++i) {
    d.in.push_back(f.col_sum(i));
    d.out.push_back(f.row_sum(i));
  }
  return d;
}

/// Max-product path weights on a static network: best[i][j] = P-hat_ij, the
/// largest product of edge weights over any path i -> j (0 when unreachable).
struct StaticPaths {
  std::size_t n = 0;
  std::vector<double> neg_log;  ///< row-major; +inf when unreachable, 0 on the diagonal
  int clamped_entries = 0;      ///< weights >= 1 clipped below one

  double distance(std::size_t i, std::size_t j) const { return neg_log[i * n + j]; }
};

inline constexpr double kMaxPathWeight = 1.0 - 1e-12;

/// Dijkstra on -log(weight). Weights at or above one are clipped to just
/// below one so every edge length stays positive.
inline StaticPaths max_product_paths(const FlowMatrix& f) {
  const std::size_t n = f.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  StaticPaths out{n, std::vector<double>(n * n, inf), 0};
  std::vector<double> len(n * n, inf);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !(f(i, j) > 0.0)) continue;
      double w = f(i, j);
      if (w > kMaxPathWeight) {
        w = kMaxPathWeight;
        ++out.clamped_entries;
      }
      len[i * n + j] = -std::log(w);
    }
  std::vector<bool> done(n);
  for (std::size_t s = 0; s < n; ++s) {
    double* dist = out.neg_log.data() + s * n;
    std::fill(done.begin(), done.end(), false);
    dist[s] = 0.0;
    for (std::size_t round = 0; round < n; ++round) {
      std::size_t u = n;
      for (std::size_t v = 0; v < n; ++v)
        if (!done[v] && dist[v] < inf && (u == n || dist[v] < dist[u])) u = v;
      if (u == n) break;
      done[u] = true;
      for (std::size_t v = 0; v < n; ++v) {
        const double l = len[u * n + v];
        if (l < inf && dist[u] + l < dist[v]) dist[v] = dist[u] + l;
      }
    }
  }
  return out;
}

struct Closeness {
  std::vector<std::optional<double>> in;   ///< -1 / sum_j log P-hat_ji over reachable j
  std::vector<std::optional<double>> out;  ///< -1 / sum_j log P-hat_ij over reachable j
  std::vector<int> in_reachable;           ///< how many j reach i
  std::vector<int> out_reachable;          ///< how many j are reached from i
  int clamped_entries = 0;
};

/// Natural-log closeness on the week-averaged network. A location nobody
/// reaches (or that reaches nobody) has an undefined in- (out-) closeness.
inline Closeness closeness(const FlowMatrix& f) {
  const auto paths = max_product_paths(f);
  const std::size_t n = f.size();
  Closeness c;
  c.clamped_entries = paths.clamped_entries;
  for (std::size_t i = 0; i < n; ++i) {
    double sum_in = 0.0, sum_out = 0.0;
    int reach_in = 0, reach_out = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::isfinite(paths.distance(j, i))) {
        sum_in += paths.distance(j, i);
        ++reach_in;
      }
      if (std::isfinite(paths.distance(i, j))) {
        sum_out += paths.distance(i, j);
        ++reach_out;
      }
    }
    c.in.push_back(reach_in > 0 ? std::optional<double>(1.0 / sum_in) : std::nullopt);
    c.out.push_back(reach_out > 0 ? std::optional<double>(1.0 / sum_out) : std::nullopt);
    c.in_reachable.push_back(reach_in);
    c.out_reachable.push_back(reach_out);
  }
  return c;
}

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;
};

inline std::vector<double> center_distance(const StationRegistry& registry, GeoPoint center) {
  std::vector<double> d;
  for (const auto& s : registry.stations())
    d.push_back(haversine_km(s.latitude, s.longitude, center.latitude, center.longitude));
  return d;
}

struct CentralityTable {
  std::vector<double> k_in, k_out;
  std::vector<std::optional<double>> c_in, c_out;
  std::vector<int> in_reachable, out_reachable;
  std::vector<double> d_center_km;
  int clamped_entries = 0;

  std::size_t size() const { return k_in.size(); }
};

inline CentralityTable centralities(const FlowMatrix& weekly, const StationRegistry& registry, GeoPoint center) {
  if (weekly.size() != registry.size()) throw Error("network and registry disagree on location count");
  CentralityTable t;
  auto deg = degrees(weekly);
  auto clo = closeness(weekly);
  t.k_in = std::move(deg.in);
  t.k_out = std::move(deg.out);
  t.c_in = std::move(clo.in);
  t.c_out = std::move(clo.out);
  t.in_reachable = std::move(clo.in_reachable);
  t.out_reachable = std::move(clo.out_reachable);
  t.clamped_entries = clo.clamped_entries;
  t.d_center_km = center_distance(registry, center);
  return t;
}

inline constexpr std::array<std::string_view, 7> kRiskColumns = {"chi",  "gamma10", "d_center", "k_in",
                                                                 "k_out", "c_in",    "c_out"};

/// Pearson r and p between every pair of the seven per-location statistics,
/// over the locations where both values are defined.
inline CorrelationTable risk_correlations(const SweepGroup& risk, const CentralityTable& cent) {
  const std::size_t n = cent.size();
  if (risk.locations.size() != n) throw Error("sweep and centralities disagree on location count");
  std::array<std::vector<std::optional<double>>, 7> cols;
  for (std::size_t l = 0; l < n; ++l) {
    cols[0].push_back(risk.locations[l].mean_chi);
    cols[1].push_back(risk.locations[l].mean_gamma10);
    cols[2].push_back(cent.d_center_km[l]);
    cols[3].push_back(cent.k_in[l]);
    cols[4].push_back(cent.k_out[l]);
    cols[5].push_back(cent.c_in[l]);
    cols[6].push_back(cent.c_out[l]);
  }
  CorrelationTable t{cols.size(), std::vector<std::optional<Correlation>>(cols.size() * cols.size())};
  for (std::size_t a = 0; a < cols.size(); ++a)
    for (std::size_t b = a; b < cols.size(); ++b) {
      auto c = pearson_pairwise(cols[a], cols[b]);
      if (c && a == b) c->r = 1.0;
      t.cells[a * cols.size() + b] = c;
      t.cells[b * cols.size() + a] = c;
    }
  return t;
}

}  // namespace metapop
