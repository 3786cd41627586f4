#pragma once

// Louvain community detection on period flow networks and the cross-tabulated
// membership transitions between partitions of successive days.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

struct CommunityPartition {
  PeriodIndex period{};
  std::vector<int> assignment;  ///< community id per location, ids 0..k-1 by first appearance
  double modularity = 0.0;

  int communities() const {
    return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  }
  std::vector<int> sizes() const {
    std::vector<int> s(static_cast<std::size_t>(communities()), 0);
    for (int c : assignment) ++s[static_cast<std::size_t>(c)];
    return s;
  }
};

namespace detail {

/// Symmetric weighted adjacency with self-loops on the diagonal; the diagonal
/// holds twice the internal weight of an aggregated node, so k_i = sum_j A_ij.
struct UndirectedGraph {
  std::size_t n = 0;
  std::vector<double> a;

  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  std::vector<double> strengths() const {
    std::vector<double> k(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) k[i] += a[i * n + j];
    return k;
  }
};

inline UndirectedGraph symmetrize(const FlowMatrix& f) {
  UndirectedGraph g{f.size(), std::vector<double>(f.size() * f.size(), 0.0)};
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      if (i != j) g(i, j) = f(i, j) + f(j, i);
  return g;
}

/// Relabels to 0..k-1 in order of first appearance.
inline int compact_labels(std::vector<int>& labels) {
  std::vector<int> map(labels.size() + 1, -1);
  int next = 0;
  for (int& c : labels) {
    auto& m = map[static_cast<std::size_t>(c)];
    if (m < 0) m = next++;
    c = m;
  }
  return next;
}

inline std::vector<std::size_t> seeded_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::mt19937_64 rng(seed);
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng() % k]);
  return order;
}

/// Local-moving phase. Returns true if any node changed community.
inline bool local_moves(const UndirectedGraph& g, std::vector<int>& comm, double resolution, std::uint64_t seed) {
  const auto k = g.strengths();
  double m2 = 0.0;
  for (double x : k) m2 += x;
  std::vector<double> tot(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) tot[static_cast<std::size_t>(comm[i])] += k[i];
  const double eps = 1e-13 * m2;
  const auto order = seeded_order(g.n, seed);

  std::vector<double> w_to(g.n, 0.0);
  std::vector<int> touched;
  bool any = false;
  for (int pass = 0; pass < 1000; ++pass) {
    bool moved = false;
    for (std::size_t i : order) {
      const int ci = comm[i];
      touched.clear();
      for (std::size_t j = 0; j < g.n; ++j) {
        if (j == i || g(i, j) == 0.0) continue;
        const int cj = comm[j];
        if (w_to[static_cast<std::size_t>(cj)] == 0.0) touched.push_back(cj);
        w_to[static_cast<std::size_t>(cj)] += g(i, j);
      }
      std::sort(touched.begin(), touched.end());
      tot[static_cast<std::size_t>(ci)] -= k[i];
      int best = ci;
      double best_gain = w_to[static_cast<std::size_t>(ci)] - resolution * tot[static_cast<std::size_t>(ci)] * k[i] / m2;
      for (int c : touched) {
        const double gain = w_to[static_cast<std::size_t>(c)] - resolution * tot[static_cast<std::size_t>(c)] * k[i] / m2;
        if (gain > best_gain + eps) {
          best = c;
          best_gain = gain;
        }
      }
      for (int c : touched) w_to[static_cast<std::size_t>(c)] = 0.0;
      tot[static_cast<std::size_t>(best)] += k[i];
      if (best != ci) {
        comm[i] = best;
        moved = true;
        any = true;
      }
    }
    if (!moved) break;
  }
  return any;
}

inline UndirectedGraph aggregate(const UndirectedGraph& g, const std::vector<int>& comm, int communities) {
  const auto c = static_cast<std::size_t>(communities);
  UndirectedGraph out{c, std::vector<double>(c * c, 0.0)};
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      out(static_cast<std::size_t>(comm[i]), static_cast<std::size_t>(comm[j])) += g(i, j);
  return out;
}

inline double modularity(const UndirectedGraph& g, std::span<const int> comm, double resolution) {
  const auto k = g.strengths();
  double m2 = 0.0;
  for (double x : k) m2 += x;
  if (m2 == 0.0) return 0.0;
  const int communities = comm.empty() ? 0 : *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<double> internal(static_cast<std::size_t>(communities), 0.0);
  std::vector<double> tot(static_cast<std::size_t>(communities), 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    tot[static_cast<std::size_t>(comm[i])] += k[i];
    for (std::size_t j = 0; j < g.n; ++j)
      if (comm[i] == comm[j]) internal[static_cast<std::size_t>(comm[i])] += g(i, j);
  }
  double q = 0.0;
  for (std::size_t c = 0; c < internal.size(); ++c)
    q += internal[c] / m2 - resolution * (tot[c] / m2) * (tot[c] / m2);
  return q;
}

}  // namespace detail

/// Modularity of `assignment` on the symmetrised network W = F + F^T.
inline double modularity(const FlowMatrix& f, std::span<const int> assignment, double resolution = 1.0) {
  if (assignment.size() != f.size()) throw Error("assignment size mismatch");
  return detail::modularity(detail::symmetrize(f), assignment, resolution);
}

/// Two-phase Louvain on W = F + F^T. Node visiting order at each level is a
/// permutation drawn from `seed`, so equal seeds give equal partitions.
inline CommunityPartition louvain(const FlowMatrix& f, std::uint64_t seed, double resolution = 1.0,
                                  PeriodIndex period = {}) {
  const std::size_t n = f.size();
  CommunityPartition part{period, std::vector<int>(n), 0.0};
  for (std::size_t i = 0; i < n; ++i) part.assignment[i] = static_cast<int>(i);
  auto graph = detail::symmetrize(f);
  const auto original = graph;

  double total = 0.0;
  for (double w : graph.a) total += w;
  if (total == 0.0) return part;  // nothing to cluster: singletons, Q = 0

  std::uint64_t level_seed = seed;
  for (int level = 0; level < 64; ++level) {
    std::vector<int> comm(graph.n);
    for (std::size_t i = 0; i < graph.n; ++i) comm[i] = static_cast<int>(i);
    if (!detail::local_moves(graph, comm, resolution, level_seed)) break;
    const int count = detail::compact_labels(comm);
    for (int& c : part.assignment) c = comm[static_cast<std::size_t>(c)];
    if (static_cast<std::size_t>(count) == graph.n) break;
    graph = detail::aggregate(graph, comm, count);
    level_seed = level_seed * 6364136223846793005ULL + 1442695040888963407ULL;
  }
  detail::compact_labels(part.assignment);
  part.modularity = detail::modularity(original, part.assignment, resolution);
  return part;
}

// ---------------------------------------------------------------------------
// Transitions

/// Locations moving between communities of two partitions. Columns are the
/// second partition's communities relabelled to the best-overlapping row label.
struct TransitionMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> counts;      ///< row-major rows x cols
  std::vector<int> relabel_to;  ///< second-partition community id -> column label

  int at(int r, int c) const { return counts[static_cast<std::size_t>(r * cols + c)]; }
  int row_sum(int r) const {
    int s = 0;
    for (int c = 0; c < cols; ++c) s += at(r, c);
    return s;
  }
  int total() const {
    int s = 0;
    for (int v : counts) s += v;
    return s;
  }
};

/// Cross-tabulates two partitions of the same locations. Labels of `b` are
/// matched greedily to labels of `a` by decreasing overlap (ties: smaller
/// ids first); unmatched communities of `b` get fresh labels after a's.
inline TransitionMatrix transitions(const CommunityPartition& a, const CommunityPartition& b) {
  if (a.assignment.size() != b.assignment.size()) throw Error("partitions cover different locations");
  const int ka = a.communities(), kb = b.communities();
  std::vector<int> overlap(static_cast<std::size_t>(ka * kb), 0);
  for (std::size_t l = 0; l < a.assignment.size(); ++l)
    ++overlap[static_cast<std::size_t>(a.assignment[l] * kb + b.assignment[l])];

  std::vector<std::tuple<int, int, int>> pairs;  // (-count, a, b)
  for (int x = 0; x < ka; ++x)
    for (int y = 0; y < kb; ++y)
      if (int c = overlap[static_cast<std::size_t>(x * kb + y)]; c > 0) pairs.emplace_back(-c, x, y);
  std::sort(pairs.begin(), pairs.end());

  TransitionMatrix t;
  t.relabel_to.assign(static_cast<std::size_t>(kb), -1);
  std::vector<bool> a_used(static_cast<std::size_t>(ka), false);
  for (const auto& [neg, x, y] : pairs) {
    if (a_used[static_cast<std::size_t>(x)] || t.relabel_to[static_cast<std::size_t>(y)] >= 0) continue;
    a_used[static_cast<std::size_t>(x)] = true;
    t.relabel_to[static_cast<std::size_t>(y)] = x;
  }
  int fresh = ka;
  for (auto& label : t.relabel_to)
    if (label < 0) label = fresh++;
  t.rows = ka;
  t.cols = fresh;
  t.counts.assign(static_cast<std::size_t>(t.rows * t.cols), 0);
  for (std::size_t l = 0; l < a.assignment.size(); ++l)
    ++t.counts[static_cast<std::size_t>(a.assignment[l] * t.cols +
                                        t.relabel_to[static_cast<std::size_t>(b.assignment[l])])];
  return t;
}

/// `b` with its community ids replaced by the matched labels of a transition.
/// Labels may then exceed the community count of `b` alone.
inline CommunityPartition relabel(const CommunityPartition& b, const TransitionMatrix& t) {
  CommunityPartition out = b;
  for (int& c : out.assignment) c = t.relabel_to[static_cast<std::size_t>(c)];
  return out;
}

struct CommunityShare {
  int community = 0;
  int locations = 0;
  double population_fraction = 0.0;
};

/// The community with the most locations (ties: more residents, then lower id).
inline CommunityShare largest_community_share(const CommunityPartition& part, const PopulationVector& pop) {
  if (part.assignment.size() != pop.size()) throw Error("partition and populations disagree");
  const int k = *std::max_element(part.assignment.begin(), part.assignment.end()) + 1;
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> persons(static_cast<std::size_t>(k), 0);
  for (std::size_t l = 0; l < pop.size(); ++l) {
    ++count[static_cast<std::size_t>(part.assignment[l])];
    persons[static_cast<std::size_t>(part.assignment[l])] += pop.persons[l];
  }
  int best = 0;
  for (int c = 1; c < k; ++c) {
    const auto uc = static_cast<std::size_t>(c), ub = static_cast<std::size_t>(best);
    if (count[uc] > count[ub] || (count[uc] == count[ub] && persons[uc] > persons[ub])) best = c;
  }
  return {best, count[static_cast<std::size_t>(best)],
          static_cast<double>(persons[static_cast<std::size_t>(best)]) / static_cast<double>(pop.total())};
}

}  // namespace metapop
