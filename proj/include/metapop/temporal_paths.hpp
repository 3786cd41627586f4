#pragma once

// Highest-probability chronological paths through one day's four period
// matrices, and the daily coherence (least likely best path) and average
// distance (mean best-path probability) built on them.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/parallel.hpp"

namespace metapop {

/// A chronological itinerary: one move per period, starting with period
/// `start_period` and running through consecutive periods of the day.
struct TemporalPath {
  int day = 0;
  int start_period = 0;            ///< 0 = morning ... 3 = evening
  std::vector<StationId> nodes;    ///< 2..5 locations, nodes.size() - 1 moves
  double log_probability = 0.0;
  double probability = 0.0;

  int moves() const { return static_cast<int>(nodes.size()) - 1; }
  std::string describe() const {
    std::string s;
    for (std::size_t k = 0; k < nodes.size(); ++k) s += (k ? "-" : "") + std::to_string(nodes[k]);
    return s;
  }
};

/// Ranking used everywhere: higher probability, then fewer moves, then the
/// lexicographically smaller node sequence, then the earlier start period.
inline bool better_path(const TemporalPath& a, const TemporalPath& b) {
  if (a.log_probability != b.log_probability) return a.log_probability > b.log_probability;
  if (a.nodes.size() != b.nodes.size()) return a.nodes.size() < b.nodes.size();
  if (a.nodes != b.nodes) return a.nodes < b.nodes;
  return a.start_period < b.start_period;
}

/// The four matrices of `day` out of a week of 28 period matrices.
inline std::span<const FlowMatrix> day_periods(const std::vector<FlowMatrix>& week, int day) {
  if (week.size() != kPeriodsPerWeek) throw Error("expected 28 period matrices");
  return std::span<const FlowMatrix>(week).subspan(static_cast<std::size_t>(day * kPeriodsPerDay), kPeriodsPerDay);
}

namespace detail {

inline double log_weight(double f) { return f > 0.0 ? std::log(f) : -std::numeric_limits<double>::infinity(); }

inline void check_day(std::span<const FlowMatrix> periods) {
  if (periods.size() != kPeriodsPerDay) throw Error("a day has exactly four period matrices");
  for (const auto& m : periods)
    if (m.size() != periods.front().size()) throw Error("period matrices differ in size");
}

}  // namespace detail

/// Best path from `source` to every location (entry for source itself is
/// empty). Forward dynamic programme per window start in the log domain:
/// layer s keeps, for every node, the best s-move prefix ending there.
inline std::vector<std::optional<TemporalPath>> best_paths_from(StationId source, int day,
                                                                std::span<const FlowMatrix> periods) {
  detail::check_day(periods);
  const std::size_t n = periods.front().size();
  const auto src = static_cast<std::size_t>(source);
  if (src >= n) throw Error("source location out of range");
  constexpr double kNone = -std::numeric_limits<double>::infinity();

  std::vector<std::optional<TemporalPath>> best(n);
  for (int start = 0; start < kPeriodsPerDay; ++start) {
    // parents[s][v]: predecessor of v on the kept s-move prefix
    std::vector<std::vector<std::size_t>> parents;
    std::vector<double> value(n, kNone);
    value[src] = 0.0;
    auto prefix = [&](std::size_t step, std::size_t v) {
      std::vector<StationId> seq(step + 1);
      for (std::size_t s = step; s > 0; --s) {
        seq[s] = static_cast<StationId>(v);
        v = parents[s - 1][v];
      }
      seq[0] = static_cast<StationId>(v);
      return seq;
    };
    for (int step = 1; start + step <= kPeriodsPerDay; ++step) {
      const FlowMatrix& f = periods[static_cast<std::size_t>(start + step - 1)];
      std::vector<double> next(n, kNone);
      std::vector<std::size_t> parent(n, n);
      for (std::size_t u = 0; u < n; ++u) {
        if (value[u] == kNone) continue;
        for (std::size_t v = 0; v < n; ++v) {
          const double w = f(u, v);
          if (!(w > 0.0)) continue;
          const double cand = value[u] + std::log(w);
          if (cand > next[v]) {
            next[v] = cand;
            parent[v] = u;
          } else if (cand == next[v] && prefix(static_cast<std::size_t>(step) - 1, u) <
                                            prefix(static_cast<std::size_t>(step) - 1, parent[v])) {
            parent[v] = u;
          }
        }
      }
      parents.push_back(std::move(parent));
      value = std::move(next);
      for (std::size_t v = 0; v < n; ++v) {
        if (v == src || value[v] == kNone) continue;
        TemporalPath p{day, start, prefix(static_cast<std::size_t>(step), v), value[v], std::exp(value[v])};
        if (!best[v] || better_path(p, *best[v])) best[v] = std::move(p);
      }
    }
  }
  return best;
}

/// Best path from i to j on `day`; nullopt when no positive-probability path exists.
inline std::optional<TemporalPath> best_path(StationId i, StationId j, int day, std::span<const FlowMatrix> periods) {
  if (i == j) throw Error("best_path needs distinct endpoints");
  if (j < 0 || static_cast<std::size_t>(j) >= periods.front().size()) throw Error("target location out of range");
  return best_paths_from(i, day, periods)[static_cast<std::size_t>(j)];
}

/// Exhaustive enumeration of every window and node sequence. Exponential;
/// only meant for validating best_path on small cities.
inline std::optional<TemporalPath> brute_force_paths(StationId i, StationId j, int day,
                                                     std::span<const FlowMatrix> periods) {
  detail::check_day(periods);
  const std::size_t n = periods.front().size();
  if (n > 12) throw Error("brute-force path enumeration is limited to 12 locations");
  if (i == j) throw Error("brute_force_paths needs distinct endpoints");
  std::optional<TemporalPath> best;
  for (int start = 0; start < kPeriodsPerDay; ++start) {
    for (int moves = 1; start + moves <= kPeriodsPerDay; ++moves) {
      std::vector<StationId> seq(static_cast<std::size_t>(moves) + 1);
      seq.front() = i;
      seq.back() = j;
      const std::size_t inner = static_cast<std::size_t>(moves) - 1;
      std::size_t combos = 1;
      for (std::size_t k = 0; k < inner; ++k) combos *= n;
      for (std::size_t code = 0; code < combos; ++code) {
        std::size_t c = code;
        for (std::size_t k = inner; k > 0; --k) {
          seq[k] = static_cast<StationId>(c % n);
          c /= n;
        }
        double logp = 0.0;
        for (int m = 0; m < moves; ++m)
          logp += detail::log_weight(periods[static_cast<std::size_t>(start + m)](
              static_cast<std::size_t>(seq[static_cast<std::size_t>(m)]),
              static_cast<std::size_t>(seq[static_cast<std::size_t>(m) + 1])));
        if (logp == -std::numeric_limits<double>::infinity()) continue;
        TemporalPath p{day, start, seq, logp, std::exp(logp)};
        if (!best || better_path(p, *best)) best = std::move(p);
      }
    }
  }
  return best;
}

/// Daily coherence C_d (minimum best-path probability over ordered pairs) and
/// average distance delta_d (mean, unreachable pairs counting as zero).
struct CoherenceRow {
  int day = 0;
  double coherence = 0.0;
  double average = 0.0;
  StationId argmin_i = 0;
  StationId argmin_j = 0;
  int unreachable_pairs = 0;
};

struct DailyPaths {
  CoherenceRow summary;
  std::vector<std::optional<TemporalPath>> paths;  ///< row-major n x n, diagonal empty
};

inline DailyPaths daily_paths(int day, std::span<const FlowMatrix> periods, unsigned workers = 1) {
  detail::check_day(periods);
  const std::size_t n = periods.front().size();
  if (n < 2) throw Error("coherence needs at least two locations");
  DailyPaths out;
  out.paths.resize(n * n);
  parallel_for(n, workers, [&](std::size_t i) {
    auto row = best_paths_from(static_cast<StationId>(i), day, periods);
    for (std::size_t j = 0; j < n; ++j) out.paths[i * n + j] = std::move(row[j]);
  });

  CoherenceRow& row = out.summary;
  row.day = day;
  row.coherence = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& p = out.paths[i * n + j];
      const double prob = p ? p->probability : 0.0;
      if (!p) ++row.unreachable_pairs;
      sum += prob;
      if (prob < row.coherence) {
        row.coherence = prob;
        row.argmin_i = static_cast<StationId>(i);
        row.argmin_j = static_cast<StationId>(j);
      }
    }
  row.average = sum / static_cast<double>(n * (n - 1));
  return out;
}

inline CoherenceRow daily_coherence(int day, std::span<const FlowMatrix> periods, unsigned workers = 1) {
  return daily_paths(day, periods, workers).summary;
}

}  // namespace metapop
