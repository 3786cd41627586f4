#pragma once

// Hourly, per-period and week-averaged flow matrices built from trip records,
// plus the inter-period correlation structure and its average-linkage tree.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/stats.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

/// Recorded whenever an hourly row had more outflow than residents and was
/// rescaled to sum to one.
struct ClampWarning {
  int hour_of_week = 0;
  StationId location = 0;
  double row_sum = 0.0;  ///< before rescaling
};

struct HourlyFlows {
  std::vector<FlowMatrix> hours;  ///< 168 entries, Monday 00:00 first
  std::vector<ClampWarning> clamps;

  std::size_t locations() const { return hours.empty() ? 0 : hours.front().size(); }
};

/// H^t_ij = M^t_ij / N_i, binned by check-in hour of week. Self-trips are
/// discarded. Rows whose per-capita outflow exceeds one are rescaled.
inline HourlyFlows build_hourly(const std::vector<TripRecord>& trips, const Week& week,
                                const PopulationVector& populations) {
  const std::size_t n = populations.size();
  for (std::size_t i = 0; i < n; ++i)
    if (populations.persons[i] <= 0) throw Error("populations must be positive");

  // Counts are accumulated as exact integers in double storage, so the
  // result does not depend on trip order.
  HourlyFlows out;
  out.hours.assign(kHoursPerWeek, FlowMatrix(n));
  for (const auto& t : trips) {
    if (!week.contains(t.checkin_time.date))
      throw Error("trip of card " + t.card_id + " at " + format_timestamp(t.checkin_time) +
                  " lies outside the configured week");
    const auto from = static_cast<std::size_t>(t.checkin_station);
    const auto to = static_cast<std::size_t>(t.checkout_station);
    if (from >= n || to >= n) throw Error("trip references a station without a population");
    if (from == to) continue;
    const int hour = t.checkin_time.weekday() * 24 + t.checkin_time.hour();
    out.hours[static_cast<std::size_t>(hour)](from, to) += 1.0;
  }

  for (int h = 0; h < kHoursPerWeek; ++h) {
    FlowMatrix& m = out.hours[static_cast<std::size_t>(h)];
    for (std::size_t i = 0; i < n; ++i) {
      const double pop = static_cast<double>(populations.persons[i]);
      for (double& v : m.row(i)) v /= pop;
      const double s = m.row_sum(i);
      if (s > 1.0) {
        out.clamps.push_back({h, static_cast<StationId>(i), s});
        for (double& v : m.row(i)) v /= s;
      }
    }
  }
  return out;
}

/// F^p = sum of the hourly matrices inside period p. Overnight hours
/// [00:00, 05:00) belong to no period and are ignored.
inline std::vector<FlowMatrix> aggregate_periods(const std::vector<FlowMatrix>& hourly) {
  if (hourly.size() != kHoursPerWeek) throw Error("expected 168 hourly matrices");
  const std::size_t n = hourly.front().size();
  std::vector<FlowMatrix> periods(kPeriodsPerWeek, FlowMatrix(n));
  for (int h = 0; h < kHoursPerWeek; ++h) {
    auto p = period_of_hour(h % 24);
    if (!p) continue;
    periods[static_cast<std::size_t>(PeriodIndex{h / 24, *p}.index())] +=
        hourly[static_cast<std::size_t>(h)];
  }
  return periods;
}

/// F-hat = (1/7) * sum over all 28 periods: a daily matrix averaged over the week.
inline FlowMatrix weekly_average(const std::vector<FlowMatrix>& periods) {
  if (periods.size() != kPeriodsPerWeek) throw Error("expected 28 period matrices");
  FlowMatrix avg(periods.front().size());
  for (const auto& p : periods) avg += p;
  avg *= 1.0 / kDaysPerWeek;
  return avg;
}

/// Pearson r (and two-sided p) between the flattened L^2 flow vectors of
/// every pair of matrices. Constant vectors give an undefined cell.
inline CorrelationTable period_correlations(const std::vector<FlowMatrix>& periods) {
  const std::size_t n = periods.size();
  CorrelationTable table{n, std::vector<std::optional<Correlation>>(n * n)};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      auto c = pearson(periods[a].values(), periods[b].values());
      if (c && a == b) *c = Correlation{1.0, c->p ? std::optional<double>(0.0) : std::nullopt};
      table.cells[a * n + b] = c;
      table.cells[b * n + a] = c;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Average-linkage agglomerative clustering

struct Merge {
  int left = 0;   ///< cluster id: leaves are 0..n-1, merge k creates n+k
  int right = 0;  ///< left < right
  double height = 0.0;
  int size = 0;
};

struct Dendrogram {
  int leaves = 0;
  std::vector<Merge> merges;  ///< in merge order, n-1 entries
};

/// UPGMA on a symmetric distance matrix (row-major n x n). The closest pair
/// merges first; exact ties go to the lexicographically smallest id pair.
inline Dendrogram average_linkage(std::span<const double> dist, std::size_t n) {
  if (dist.size() != n * n) throw Error("distance matrix must be n x n");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (dist[i * n + j] != dist[j * n + i]) throw Error("distance matrix is not symmetric");

  std::vector<int> ids(n);
  std::vector<int> sizes(n, 1);
  for (std::size_t k = 0; k < n; ++k) ids[k] = static_cast<int>(k);
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = dist[i * n + j];

  Dendrogram tree{static_cast<int>(n), {}};
  std::vector<std::size_t> active(n);
  for (std::size_t k = 0; k < n; ++k) active[k] = k;
  int next_id = static_cast<int>(n);
  while (active.size() > 1) {
    // active slots are kept sorted by cluster id
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t b = a + 1; b < active.size(); ++b)
        if (d[active[a]][active[b]] < best) {
          best = d[active[a]][active[b]];
          best_a = a;
          best_b = b;
        }
    const std::size_t sa = active[best_a], sb = active[best_b];
    const int wa = sizes[sa], wb = sizes[sb];
    tree.merges.push_back({ids[sa], ids[sb], best, wa + wb});
    for (std::size_t k : active) {
      if (k == sa || k == sb) continue;
      const double nd = (wa * d[sa][k] + wb * d[sb][k]) / (wa + wb);
      d[sa][k] = d[k][sa] = nd;
    }
    sizes[sa] = wa + wb;
    ids[sa] = next_id++;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    // the merged cluster now carries the largest id; move it to the back
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
    active.push_back(sa);
  }
  return tree;
}

/// Clusters periods on d = 1 - r. Undefined correlations count as r = 0.
inline Dendrogram hierarchical_cluster(const CorrelationTable& corr) {
  const std::size_t n = corr.n;
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      auto r = corr.r(i, j);
      auto rt = corr.r(j, i);
      if (r.has_value() != rt.has_value() || (r && *r != *rt))
        throw Error("correlation matrix is not symmetric");
      if (i != j) dist[i * n + j] = 1.0 - r.value_or(0.0);
    }
  }
  return average_linkage(dist, n);
}

}  // namespace metapop
