#pragma once

// Deterministic discrete-time metapopulation SIR driven by hourly flow
// matrices, first-arrival bookkeeping, the cumulative arrival curve and
// its threshold times, and the introduction-scenario sweep.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metapop/core.hpp"
#include "metapop/parallel.hpp"
#include "metapop/trip_ingest.hpp"

namespace metapop {

inline constexpr double kDefaultGamma = 0.33 / 24.0;

/// Hourly transmission and recovery rates.
struct DiseaseParams {
  double beta = 0.5 / 24.0;
  double gamma = kDefaultGamma;

  double r0() const { return beta / gamma; }
  static DiseaseParams from_r0(double r0, double gamma = kDefaultGamma) { return {r0 * gamma, gamma}; }
  void validate() const {
    if (!(beta > 0.0) || !(gamma > 0.0)) throw Error("beta and gamma must be positive");
  }
};

struct EpidemicState {
  std::vector<double> S, I, R;
  std::int64_t hour = 0;  ///< hours since introduction

  explicit EpidemicState(std::size_t n = 0) : S(n, 0.0), I(n, 0.0), R(n, 0.0) {}
  static EpidemicState susceptible(const PopulationVector& pop) {
    EpidemicState s(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) s.S[i] = static_cast<double>(pop.persons[i]);
    return s;
  }
  std::size_t size() const { return S.size(); }

  static double sum(const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return t;
  }
  double total_S() const { return sum(S); }
  double total_I() const { return sum(I); }
  double total_R() const { return sum(R); }
  double total() const { return total_S() + total_I() + total_R(); }
};

struct SimOptions {
  double arrival_threshold = 1.0;   ///< persons infected for a location to count as reached
  double extinction_level = 1e-6;   ///< stop once total infected falls below this
  double negative_tolerance = 1e-12;  ///< relative to N_i; rounding noise below this is floored
  bool record_series = false;       ///< keep hourly S/I/R totals
};

/// The 168 hourly matrices with precomputed row sums. Overnight hours
/// [00:00, 05:00) always move nobody.
class FlowSchedule {
 public:
  FlowSchedule() = default;
  explicit FlowSchedule(std::vector<FlowMatrix> hours) : hours_(std::move(hours)) {
    if (hours_.size() != kHoursPerWeek) throw Error("expected 168 hourly matrices");
    const std::size_t n = hours_.front().size();
    row_sums_.resize(hours_.size());
    active_.resize(hours_.size());
    for (std::size_t h = 0; h < hours_.size(); ++h) {
      if (hours_[h].size() != n) throw Error("hourly matrices differ in size");
      row_sums_[h].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double s = hours_[h].row_sum(i);
        if (s > 1.0 + 1e-12)
          throw Error("hour " + std::to_string(h) + " row " + std::to_string(i) +
                      " moves more than the whole population (row sum " + format_double(s) + ")");
        row_sums_[h][i] = s;
      }
      active_[h] = period_of_hour(static_cast<int>(h) % 24).has_value() && !hours_[h].is_zero();
    }
  }

  std::size_t locations() const { return hours_.empty() ? 0 : hours_.front().size(); }
  bool moves(int hour_of_week) const { return active_[static_cast<std::size_t>(hour_of_week)]; }
  const FlowMatrix& matrix(int hour_of_week) const { return hours_[static_cast<std::size_t>(hour_of_week)]; }
  const std::vector<double>& row_sums(int hour_of_week) const {
    return row_sums_[static_cast<std::size_t>(hour_of_week)];
  }

 private:
  std::vector<FlowMatrix> hours_;
  std::vector<std::vector<double>> row_sums_;
  std::vector<bool> active_;
};

namespace detail {

inline double settle(double v, double pop, double tol, const char* compartment, std::size_t i) {
  if (v >= 0.0) return v;
  if (v > -tol * std::max(1.0, pop)) return 0.0;
  throw Error(std::string("negative ") + compartment + " at location " + std::to_string(i) +
              " (" + format_double(v) + "): update is unstable for these rates");
}

/// One hour of the update, all terms evaluated on the start-of-hour state:
/// local transmission, recovery, then transport out of and into each patch.
inline void advance(const EpidemicState& now, EpidemicState& next, const FlowMatrix* flow,
                    const std::vector<double>* row_sums, const DiseaseParams& params,
                    std::span<const double> pop, double tol, std::vector<double>& scratch) {
  const std::size_t n = now.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double infections = params.beta * now.S[i] * now.I[i] / pop[i];
    const double recoveries = params.gamma * now.I[i];
    next.S[i] = now.S[i] - infections;
    next.I[i] = now.I[i] + infections - recoveries;
    next.R[i] = now.R[i] + recoveries;
  }
  if (flow != nullptr) {
    const std::array<const std::vector<double>*, 3> src = {&now.S, &now.I, &now.R};
    const std::array<std::vector<double>*, 3> dst = {&next.S, &next.I, &next.R};
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& x = *src[c];
      scratch.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto row = flow->row(i);
        for (std::size_t j = 0; j < n; ++j) scratch[j] += row[j] * xi;
      }
      auto& y = *dst[c];
      for (std::size_t i = 0; i < n; ++i) y[i] += scratch[i] - (*row_sums)[i] * x[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    next.S[i] = settle(next.S[i], pop[i], tol, "S", i);
    next.I[i] = settle(next.I[i], pop[i], tol, "I", i);
    next.R[i] = settle(next.R[i], pop[i], tol, "R", i);
  }
  next.hour = now.hour + 1;
}

}  // namespace detail

/// Advances the state by one hour under `hourly_flow`.
inline EpidemicState step_hour(const EpidemicState& state, const FlowMatrix& hourly_flow,
                               const DiseaseParams& params, const PopulationVector& populations,
                               const SimOptions& options = {}) {
  const std::size_t n = state.size();
  if (hourly_flow.size() != n || populations.size() != n) throw Error("size mismatch in step_hour");
  std::vector<double> sums(n);
  for (std::size_t i = 0; i < n; ++i) {
    sums[i] = hourly_flow.row_sum(i);
    if (sums[i] > 1.0 + 1e-12)
      throw Error("flow row " + std::to_string(i) + " sums to " + format_double(sums[i]) +
                  " > 1; clamp hourly matrices first");
  }
  const auto pop = populations.as_doubles();
  EpidemicState next(n);
  std::vector<double> scratch;
  detail::advance(state, next, &hourly_flow, &sums, params, pop, options.negative_tolerance, scratch);
  return next;
}

// ---------------------------------------------------------------------------
// Arrivals

struct Arrival {
  int hour = 0;  ///< hour since introduction during which the threshold was crossed
  int day = 0;   ///< hour / 24
  Period period = Period::morning;  ///< clock period; overnight hours count as evening
};

/// First arrival per location and the per-(day, period) counts A(d, p).
class ArrivalTable {
 public:
  ArrivalTable() = default;
  ArrivalTable(std::size_t locations, int days) : first_(locations), counts_(static_cast<std::size_t>(days)) {}

  void record(StationId loc, Arrival a) {
    auto& slot = first_.at(static_cast<std::size_t>(loc));
    if (slot) return;
    slot = a;
    if (a.day < days()) ++counts_[static_cast<std::size_t>(a.day)][static_cast<std::size_t>(a.period)];
  }

  std::size_t locations() const { return first_.size(); }
  int days() const { return static_cast<int>(counts_.size()); }
  const std::optional<Arrival>& first(StationId loc) const { return first_.at(static_cast<std::size_t>(loc)); }
  int count(int day, Period p) const {
    return counts_.at(static_cast<std::size_t>(day))[static_cast<std::size_t>(p)];
  }
  int count_day(int day) const {
    const auto& c = counts_.at(static_cast<std::size_t>(day));
    return c[0] + c[1] + c[2] + c[3];
  }
  int reached() const {
    return static_cast<int>(std::count_if(first_.begin(), first_.end(), [](const auto& a) { return a.has_value(); }));
  }

 private:
  std::vector<std::optional<Arrival>> first_;
  std::vector<std::array<int, 4>> counts_;
};

/// Phi(d): cumulative fraction of locations reached by the end of day d.
inline std::vector<double> phi_curve(const ArrivalTable& arrivals, std::size_t locations) {
  if (locations == 0) throw Error("phi_curve needs at least one location");
  std::vector<double> phi(static_cast<std::size_t>(arrivals.days()));
  int cumulative = 0;
  for (int d = 0; d < arrivals.days(); ++d) {
    cumulative += arrivals.count_day(d);
    phi[static_cast<std::size_t>(d)] = static_cast<double>(cumulative) / static_cast<double>(locations);
  }
  return phi;
}

/// Gamma_T: first day on which Phi reaches `threshold`; nullopt if never.
inline std::optional<int> days_to_threshold(std::span<const double> phi, double threshold) {
  for (std::size_t d = 0; d < phi.size(); ++d)
    if (phi[d] >= threshold - 1e-12) return static_cast<int>(d);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Single simulation

struct Scenario {
  StationId seed_location = 0;
  PeriodIndex seed_time{};
  double i0 = 1.0;
  DiseaseParams params{};
  int horizon_days = 200;
};

struct Totals {
  double S = 0.0, I = 0.0, R = 0.0;
};

struct SimulationResult {
  ArrivalTable arrivals;
  std::vector<Totals> series;  ///< hourly totals incl. the seeded state; only if requested
  int hours_run = 0;
  int peak_day = 0;
  double peak_infected = 0.0;
  double final_size = 0.0;  ///< persons ever infected
  EpidemicState final_state;
};

struct NoObserver {
  void operator()(const EpidemicState&) const {}
};

/// Seeds i0 infections at the scenario's location when its seed period opens,
/// then steps hour by hour with the hour-of-week matrix until the horizon or
/// until the epidemic dies out. The observer sees the seeded state and every
/// state after a step.
template <typename Observer = NoObserver>
SimulationResult simulate(const Scenario& sc, const FlowSchedule& flows, const PopulationVector& populations,
                          const SimOptions& options = {}, Observer&& observe = {}) {
  const std::size_t n = populations.size();
  if (flows.locations() != n) throw Error("flow matrices and populations disagree on location count");
  sc.params.validate();
  if (sc.horizon_days <= 0) throw Error("horizon must be at least one day");
  if (!(sc.seed_location >= 0 && static_cast<std::size_t>(sc.seed_location) < n))
    throw Error("seed location " + std::to_string(sc.seed_location) + " does not exist");
  const double seed_pop = static_cast<double>(populations.persons[static_cast<std::size_t>(sc.seed_location)]);
  if (!(sc.i0 >= 1.0) || sc.i0 > seed_pop)
    throw Error("initial infected " + format_double(sc.i0) + " must lie in [1, " + format_double(seed_pop) +
                "] for location " + std::to_string(sc.seed_location));

  const auto pop = populations.as_doubles();
  const int start_how = sc.seed_time.first_hour_of_week();
  auto clock_period = [&](int hour) {
    const int hod = ((start_how + hour) % kHoursPerWeek) % 24;
    return period_of_hour(hod).value_or(Period::evening);
  };

  SimulationResult result;
  result.arrivals = ArrivalTable(n, sc.horizon_days);
  EpidemicState state = EpidemicState::susceptible(populations);
  state.S[static_cast<std::size_t>(sc.seed_location)] -= sc.i0;
  state.I[static_cast<std::size_t>(sc.seed_location)] += sc.i0;
  result.arrivals.record(sc.seed_location, {0, 0, sc.seed_time.period});
  const double total_pop = state.total();

  auto note = [&](const EpidemicState& s) {
    const double infected = s.total_I();
    if (options.record_series) result.series.push_back({s.total_S(), infected, s.total_R()});
    if (infected > result.peak_infected) {
      result.peak_infected = infected;
      result.peak_day = static_cast<int>(s.hour / 24);
    }
    observe(s);
    return infected;
  };
  note(state);

  EpidemicState next(n);
  std::vector<double> scratch;
  const int horizon_hours = sc.horizon_days * 24;
  for (int k = 0; k < horizon_hours; ++k) {
    const int how = (start_how + k) % kHoursPerWeek;
    const bool moving = flows.moves(how);
    detail::advance(state, next, moving ? &flows.matrix(how) : nullptr, moving ? &flows.row_sums(how) : nullptr,
                    sc.params, pop, options.negative_tolerance, scratch);
    std::swap(state, next);
    for (std::size_t i = 0; i < n; ++i)
      if (state.I[i] >= options.arrival_threshold && !result.arrivals.first(static_cast<StationId>(i)))
        result.arrivals.record(static_cast<StationId>(i), {k, k / 24, clock_period(k)});
    result.hours_run = k + 1;
    if (note(state) < options.extinction_level) break;
  }
  result.final_size = total_pop - state.total_S();
  result.final_state = std::move(state);
  return result;
}

template <typename Observer = NoObserver>
SimulationResult simulate(const Scenario& sc, const std::vector<FlowMatrix>& hourly,
                          const PopulationVector& populations, const SimOptions& options = {},
                          Observer&& observe = {}) {
  return simulate(sc, FlowSchedule(hourly), populations, options, std::forward<Observer>(observe));
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepGrid {
  std::vector<StationId> locations;
  std::vector<double> i0s;
  std::vector<DiseaseParams> params;
  std::vector<PeriodIndex> seed_times;
  std::vector<double> thresholds{0.05, 0.10, 0.25, 0.50};
  int horizon_days = 200;

  /// Every location and every period of the week.
  static SweepGrid full(std::size_t locations, std::vector<double> i0s, std::vector<DiseaseParams> params) {
    SweepGrid g;
    for (std::size_t i = 0; i < locations; ++i) g.locations.push_back(static_cast<StationId>(i));
    for (int p = 0; p < kPeriodsPerWeek; ++p) g.seed_times.push_back(PeriodIndex::from_index(p));
    g.i0s = std::move(i0s);
    g.params = std::move(params);
    return g;
  }

  std::size_t size() const { return params.size() * i0s.size() * locations.size() * seed_times.size(); }

  /// Scenario ids run parameter set, then i0, then location, then seed time.
  Scenario scenario(std::size_t id, std::size_t* param_index = nullptr, std::size_t* i0_index = nullptr) const {
    std::size_t k = id;
    const std::size_t t = k % seed_times.size();
    k /= seed_times.size();
    const std::size_t l = k % locations.size();
    k /= locations.size();
    const std::size_t a = k % i0s.size();
    const std::size_t p = k / i0s.size();
    if (param_index) *param_index = p;
    if (i0_index) *i0_index = a;
    return Scenario{locations[l], seed_times[t], i0s[a], params[p], horizon_days};
  }
};

struct ScenarioOutcome {
  std::size_t id = 0;
  Scenario scenario;
  std::size_t param_index = 0;
  std::size_t i0_index = 0;
  bool ok = false;
  std::string error;
  std::vector<std::optional<int>> threshold_days;  ///< Gamma_T per grid threshold
  std::optional<int> gamma10;
  ArrivalTable arrivals;
  int peak_day = 0;
  double final_size = 0.0;
};

struct LocationRisk {
  std::optional<double> mean_gamma10;  ///< as seed, over seed times that reached 10%
  int gamma10_samples = 0;
  int gamma10_unreached = 0;
  std::optional<double> mean_chi;  ///< as target, over other-seeded scenarios that reached it
  int chi_samples = 0;
  int unreached = 0;
};

/// Risk summary for one (parameter set, i0) slice of the grid.
struct SweepGroup {
  std::size_t param_index = 0;
  std::size_t i0_index = 0;
  DiseaseParams params;
  double i0 = 0.0;
  std::vector<LocationRisk> locations;  ///< indexed by station id
};

struct SweepResult {
  SweepGrid grid;
  std::vector<ScenarioOutcome> scenarios;
  std::vector<SweepGroup> groups;

  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(scenarios.begin(), scenarios.end(), [](const auto& s) { return !s.ok; }));
  }
};

inline ScenarioOutcome run_scenario(const SweepGrid& grid, std::size_t id, const FlowSchedule& flows,
                                    const PopulationVector& populations, const SimOptions& options) {
  ScenarioOutcome out;
  out.id = id;
  out.scenario = grid.scenario(id, &out.param_index, &out.i0_index);
  try {
    auto sim = simulate(out.scenario, flows, populations, options);
    const auto phi = phi_curve(sim.arrivals, populations.size());
    for (double t : grid.thresholds) out.threshold_days.push_back(days_to_threshold(phi, t));
    out.gamma10 = days_to_threshold(phi, 0.10);
    out.peak_day = sim.peak_day;
    out.final_size = sim.final_size;
    out.arrivals = std::move(sim.arrivals);
    out.ok = true;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

inline std::vector<SweepGroup> summarize_sweep(const SweepGrid& grid, const std::vector<ScenarioOutcome>& scenarios,
                                               std::size_t locations) {
  std::vector<SweepGroup> groups;
  for (std::size_t p = 0; p < grid.params.size(); ++p)
    for (std::size_t a = 0; a < grid.i0s.size(); ++a)
      groups.push_back({p, a, grid.params[p], grid.i0s[a], std::vector<LocationRisk>(locations)});

  struct Acc {
    double gamma_sum = 0.0, chi_sum = 0.0;
  };
  std::vector<std::vector<Acc>> acc(groups.size(), std::vector<Acc>(locations));
  for (const auto& s : scenarios) {
    if (!s.ok) continue;
    const std::size_t g = s.param_index * grid.i0s.size() + s.i0_index;
    auto& risk = groups[g].locations;
    const auto seed = static_cast<std::size_t>(s.scenario.seed_location);
    if (s.gamma10) {
      acc[g][seed].gamma_sum += *s.gamma10;
      ++risk[seed].gamma10_samples;
    } else {
      ++risk[seed].gamma10_unreached;
    }
    for (std::size_t l = 0; l < locations; ++l) {
      if (l == seed) continue;
      const auto& a = s.arrivals.first(static_cast<StationId>(l));
      if (a) {
        acc[g][l].chi_sum += a->day;
        ++risk[l].chi_samples;
      } else {
        ++risk[l].unreached;
      }
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t l = 0; l < locations; ++l) {
      auto& r = groups[g].locations[l];
      if (r.gamma10_samples > 0) r.mean_gamma10 = acc[g][l].gamma_sum / r.gamma10_samples;
      if (r.chi_samples > 0) r.mean_chi = acc[g][l].chi_sum / r.chi_samples;
    }
  return groups;
}

/// Runs every scenario of the grid. A failing scenario is recorded and the
/// sweep continues. Results are ordered by scenario id whatever the worker count.
inline SweepResult sweep(const SweepGrid& grid, const FlowSchedule& flows, const PopulationVector& populations,
                         unsigned workers = default_workers(), const SimOptions& options = {}) {
  if (grid.size() == 0) throw Error("sweep grid is empty");
  SweepResult result;
  result.grid = grid;
  result.scenarios.resize(grid.size());
  SimOptions opts = options;
  opts.record_series = false;
  parallel_for(grid.size(), workers, [&](std::size_t id) {
    result.scenarios[id] = run_scenario(grid, id, flows, populations, opts);
  });
  result.groups = summarize_sweep(grid, result.scenarios, populations.size());
  return result;
}

}  // namespace metapop
