// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs the library in-process, and the CLI binary for the
// end-to-end determinism check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "metapop/metapop.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace metapop;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct City {
  SynthCity synth;
  PopulationVector populations;
  std::vector<FlowMatrix> hourly, periods;
  FlowMatrix weekly;
};

City build_city(const SynthConfig& cfg) {
  City c;
  c.synth = generate_city(cfg);
  c.populations = allocate_population(c.synth.districts, c.synth.registry);
  c.hourly = build_hourly(filter_same_period(c.synth.trips), c.synth.week, c.populations).hours;
  c.periods = aggregate_periods(c.hourly);
  c.weekly = weekly_average(c.periods);
  return c;
}

std::vector<StationId> all_locations(std::size_t n) {
  std::vector<StationId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<StationId>(i);
  return v;
}

// ---------------------------------------------------------------------------

void scalar_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const PopulationVector pop{{100000}};
  Scenario sc;
  sc.i0 = 1;
  sc.params = {0.5 / 24, 0.33 / 24};
  sc.horizon_days = 200;
  SimOptions opts;
  opts.record_series = true;
  const auto sim = simulate(sc, std::vector<FlowMatrix>(kHoursPerWeek, FlowMatrix(1)), pop, opts);
  const double runtime = seconds_since(t0);

  oracle::ScalarSir s{100000 - 1, 1, 0, 100000, 0.5 / 24, 0.33 / 24};
  double worst = 0.0;
  auto rel = [](double a, double b) { return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b); };
  for (std::size_t h = 0; h < sim.series.size(); ++h) {
    if (h > 0) s.step();
    const auto& t = sim.series[h];
    worst = std::max({worst, rel(t.S, s.S), rel(t.I, s.I), rel(t.R, s.R)});
  }
  const bool full = sim.series.size() == 200 * 24 + 1;
  report(1, "scalar SIR oracle", full && worst < 1e-9 && runtime < 1.0,
         std::to_string(sim.series.size() - 1) + " hourly steps, max relative error " + fmt(worst) + ", " +
             fmt(runtime, 3) + " s");
}

void conservation() {
  SynthConfig cfg;
  cfg.locations = 20;
  const auto city = build_city(cfg);
  const double total = static_cast<double>(city.populations.total());
  const FlowSchedule flows(city.hourly);
  double drift = 0.0;
  int violations = 0, steps = 0, full_horizon_runs = 0;
  // default beta runs the whole horizon; R0 7.5 burns out and stops at extinction
  for (const DiseaseParams params : {DiseaseParams{}, DiseaseParams::from_r0(7.5)}) {
    Scenario sc;
    sc.seed_location = 3;
    sc.seed_time = *parse_period_index("mon/morning");
    sc.i0 = 10;
    sc.params = params;
    sc.horizon_days = 200;
    double prev_s = std::numeric_limits<double>::infinity(), prev_r = -1.0;
    const auto sim = simulate(sc, flows, city.populations, SimOptions{}, [&](const EpidemicState& st) {
      const double s = st.total_S(), r = st.total_R();
      drift = std::max(drift, std::abs(st.total() - total) / total);
      if (s > prev_s || r < prev_r) ++violations;
      prev_s = s;
      prev_r = r;
      ++steps;
    });
    if (sim.hours_run == 200 * 24) ++full_horizon_runs;
  }
  report(2, "population conservation and global monotonicity", drift < 1e-9 && violations == 0 && full_horizon_runs >= 1,
         "max relative drift " + fmt(drift) + ", " + std::to_string(violations) + " monotonicity violations in " +
             std::to_string(steps) + " states");
}

// Shared by criteria 3 and 9: the full 20-location grid.
struct FullSweep {
  SweepGrid grid;
  City city;
  SweepResult result;
  double seconds = 0.0;
};

std::string serialize(const SweepResult& r) {
  std::ostringstream out;
  for (const auto& s : r.scenarios) {
    out << s.id << ' ' << s.ok << ' ' << s.error << ' ' << s.peak_day << ' ' << format_double(s.final_size);
    for (const auto& t : s.threshold_days) out << ' ' << (t ? *t : -1);
    for (std::size_t i = 0; i < s.arrivals.locations(); ++i) {
      const auto& a = s.arrivals.first(static_cast<StationId>(i));
      out << ' ' << (a ? a->hour : -1);
    }
    out << '\n';
  }
  for (const auto& g : r.groups)
    for (const auto& l : g.locations)
      out << format_optional(l.mean_gamma10) << ' ' << format_optional(l.mean_chi) << ' ' << l.unreached << '\n';
  return out.str();
}

FullSweep run_full_sweep() {
  FullSweep f;
  SynthConfig cfg;
  cfg.locations = 20;
  f.city = build_city(cfg);
  f.grid = SweepGrid::full(20, {1, 100, 10000}, {DiseaseParams::from_r0(1.5), DiseaseParams::from_r0(7.5)});
  f.grid.horizon_days = 200;
  const auto t0 = std::chrono::steady_clock::now();
  f.result = sweep(f.grid, FlowSchedule(f.city.hourly), f.city.populations, default_workers());
  f.seconds = seconds_since(t0);
  return f;
}

void metric_monotonicity(const FullSweep& f) {
  int bad_phi = 0, bad_gamma = 0, checked = 0;
  const std::size_t n = f.city.populations.size();
  for (const auto& s : f.result.scenarios) {
    if (!s.ok) continue;
    ++checked;
    const auto phi = phi_curve(s.arrivals, n);
    for (std::size_t d = 0; d < phi.size(); ++d)
      if (phi[d] > 1.0 || (d > 0 && phi[d] < phi[d - 1])) {
        ++bad_phi;
        break;
      }
    // thresholds are 5%, 10%, 25%, 50%; an unreached threshold counts as infinite
    for (std::size_t k = 1; k < s.threshold_days.size(); ++k) {
      const auto &lo = s.threshold_days[k - 1], &hi = s.threshold_days[k];
      if ((hi && !lo) || (hi && lo && *hi < *lo)) {
        ++bad_gamma;
        break;
      }
    }
  }
  const bool thresholds_ok = f.grid.thresholds == std::vector<double>{0.05, 0.10, 0.25, 0.50};
  report(3, "metric monotonicity", checked > 0 && thresholds_ok && bad_phi == 0 && bad_gamma == 0 &&
                                       f.result.failures() == 0,
         std::to_string(checked) + " scenarios, " + std::to_string(bad_phi) + " bad phi curves, " +
             std::to_string(bad_gamma) + " non-monotone gamma rows");
}

void friday_effect() {
  const auto t0 = std::chrono::steady_clock::now();
  auto gap = [](double bridge, std::string& detail) {
    SynthConfig cfg;
    cfg.locations = 20;
    cfg.layout = Layout::two_cluster;
    cfg.friday_bridge = bridge;
    cfg.daily_trips = 10000;
    cfg.cluster_gap_km = 6;
    const auto city = build_city(cfg);
    SweepGrid grid;
    grid.locations = all_locations(20);
    grid.seed_times = {*parse_period_index("fri/morning"), *parse_period_index("mon/evening")};
    grid.i0s = {10};
    grid.params = {DiseaseParams::from_r0(1.5)};
    grid.horizon_days = 200;
    const auto res = sweep(grid, FlowSchedule(city.hourly), city.populations, default_workers());
    double sum[2] = {0, 0};
    int count[2] = {0, 0};
    for (const auto& s : res.scenarios)
      if (s.ok && s.gamma10) {
        const int k = s.scenario.seed_time.day == 4 ? 0 : 1;
        sum[k] += *s.gamma10;
        ++count[k];
      }
    const double fri = sum[0] / count[0], mon = sum[1] / count[1];
    detail += "bridge " + fmt(bridge) + ": Fri-morning " + fmt(fri) + " d (" + std::to_string(count[0]) +
              " seeds), Mon-evening " + fmt(mon) + " d (" + std::to_string(count[1]) + " seeds); ";
    return mon - fri;
  };
  std::string detail;
  const double bridged = gap(10, detail);
  const double plain = gap(1, detail);
  const double runtime = seconds_since(t0);
  report(4, "Friday effect", bridged > 0 && plain < bridged / 2 && runtime < 300,
         detail + "gap " + fmt(bridged) + " vs " + fmt(plain) + ", " + fmt(runtime, 3) + " s");
}

void path_oracle() {
  std::mt19937_64 rng(20150417);
  static const double kTieValues[] = {0.5, 0.25, 0.125, 0.1, 0.2};
  int instances = 0, pairs = 0, mismatches = 0, coherence_violations = 0;
  for (; instances < 250; ++instances) {
    const std::size_t n = 2 + rng() % 7;
    std::vector<FlowMatrix> day(4, FlowMatrix(n));
    for (auto& m : day)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j && rng() % 5 < 2)
            m(i, j) = instances % 2 ? kTieValues[rng() % 5] : std::uniform_real_distribution<>(0.0, 1.0)(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const auto fast = best_paths_from(static_cast<StationId>(i), 0, day);
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        ++pairs;
        const auto slow = brute_force_paths(static_cast<StationId>(i), static_cast<StationId>(j), 0, day);
        const bool same = fast[j].has_value() == slow.has_value() &&
                          (!slow || (std::abs(fast[j]->probability - slow->probability) <= 1e-12 &&
                                     fast[j]->nodes == slow->nodes && fast[j]->start_period == slow->start_period));
        if (!same) ++mismatches;
      }
    }
    const auto row = daily_coherence(0, day);
    if (row.coherence > row.average) ++coherence_violations;
  }

  SynthConfig cfg;
  cfg.locations = 20;
  cfg.layout = Layout::two_cluster;
  cfg.friday_bridge = 10;
  cfg.daily_trips = 10000;
  cfg.cluster_gap_km = 6;
  const auto city = build_city(cfg);
  const auto mon = daily_coherence(0, day_periods(city.periods, 0));
  const auto fri = daily_coherence(4, day_periods(city.periods, 4));
  report(5, "temporal path oracle and Friday coherence",
         instances >= 200 && mismatches == 0 && coherence_violations == 0 && fri.coherence > mon.coherence,
         std::to_string(instances) + " instances, " + std::to_string(pairs) + " pairs, " +
             std::to_string(mismatches) + " mismatches, " + std::to_string(coherence_violations) +
             " C>delta; bridged C_fri " + fmt(fri.coherence) + " vs C_mon " + fmt(mon.coherence));
}

void centrality_signs() {
  SynthConfig cfg;
  cfg.locations = 25;
  cfg.layout = Layout::grid;
  cfg.core_density = 3;
  const auto city = build_city(cfg);
  SweepGrid grid = SweepGrid::full(25, {1}, {DiseaseParams::from_r0(1.5)});
  grid.horizon_days = 200;
  const auto res = sweep(grid, FlowSchedule(city.hourly), city.populations, default_workers());
  const auto cent = centralities(city.weekly, city.synth.registry, {cfg.center_lat, cfg.center_lon});
  const auto table = risk_correlations(res.groups.at(0), cent);
  constexpr std::size_t chi = 0, gamma10 = 1, k_in = 3;
  const auto& a = table.at(k_in, chi);
  const auto& b = table.at(k_in, gamma10);
  const auto& c = table.at(chi, gamma10);
  const bool pass = a && b && c && a->r < 0 && a->p && *a->p < 0.05 && b->r < 0 && b->p && *b->p < 0.05 && c->r > 0;
  auto show = [](const std::optional<Correlation>& x) {
    return x ? fmt(x->r) + " (p " + (x->p ? fmt(*x->p, 2) : "NA") + ")" : std::string("undefined");
  };
  report(6, "centrality-risk signs", pass,
         "r(k_in,chi) " + show(a) + ", r(k_in,G10) " + show(b) + ", r(chi,G10) " + show(c));
}

void community_recovery() {
  FlowMatrix planted(20);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      if (i != j) planted(i, j) = (i < 10) == (j < 10) ? 1.0 : 0.01;
  std::vector<int> truth(20, 0);
  for (std::size_t i = 10; i < 20; ++i) truth[i] = 1;
  int recovered = 0, seeds = 0;
  for (std::uint64_t seed : {1ULL, 7ULL, 42ULL, 2015ULL, 987654321ULL}) {
    ++seeds;
    if (louvain(planted, seed).assignment == truth) ++recovered;
  }

  std::mt19937_64 rng(77);
  int nondeterministic = 0;
  for (int k = 0; k < 20; ++k) {
    const auto f = oracle::random_matrix(15 + rng() % 20, rng, 0.6);
    const auto a = louvain(f, 99), b = louvain(f, 99);
    if (a.assignment != b.assignment || a.modularity != b.modularity) ++nondeterministic;
  }

  int invariant_failures = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng() % 50;
    auto labels = [&](int kmax) {
      std::vector<int> v(n);
      for (auto& x : v) x = static_cast<int>(rng() % static_cast<unsigned>(kmax));
      detail::compact_labels(v);
      return CommunityPartition{{}, v, 0.0};
    };
    const auto a = labels(1 + static_cast<int>(rng() % 8));
    const auto b = labels(1 + static_cast<int>(rng() % 8));
    const auto t = transitions(a, b);
    const auto sizes = a.sizes();
    bool ok = t.total() == static_cast<int>(n);
    for (int r = 0; r < t.rows; ++r) ok = ok && t.row_sum(r) == sizes[static_cast<std::size_t>(r)];
    if (!ok) ++invariant_failures;
  }
  report(7, "community recovery", recovered == seeds && nondeterministic == 0 && invariant_failures == 0,
         std::to_string(recovered) + "/" + std::to_string(seeds) + " seeds recover the planted blocks, " +
             std::to_string(nondeterministic) + " nondeterministic runs, " + std::to_string(invariant_failures) +
             "/100 transition invariant failures");
}

void activity_fixtures() {
  int correct = 0, total = 0;
  std::string wrong;
  for (const auto& f : fixtures::motif_fixtures()) {
    ++total;
    const auto schedules = build_schedules(f.trips);
    const auto got = schedules.size() == 1 ? classify(schedules[0]).motif : Motif::Unclassified;
    if (schedules.size() == 1 && got == f.expected) ++correct;
    else wrong += " " + f.name + "->" + std::string(motif_name(got));
  }
  std::vector<MotifLabel> labels;
  for (const char* name : {"HWH", "HWEH", "HW1W2H"})
    labels.push_back(classify(build_schedules(fixtures::fixture(name).trips)[0]));
  const auto row = recreational_fraction(labels);
  const bool exact = row.rho && *row.rho == 1.0 / 3.0;
  report(8, "activity classification", total == 8 && correct == total && exact,
         std::to_string(correct) + "/" + std::to_string(total) + " fixtures" + wrong + ", rho " +
             (row.rho ? format_double(*row.rho) : "undefined") + " on 3 workers");
}

void sweep_throughput(const FullSweep& f) {
  const auto reference = serialize(f.result);
  const FlowSchedule flows(f.city.hourly);
  std::string detail;
  bool identical = true;
  for (unsigned workers : {1u, 3u, default_workers()}) {
    const auto again = sweep(f.grid, flows, f.city.populations, workers);
    identical = identical && serialize(again) == reference;
    detail += " workers=" + std::to_string(workers);
  }
  report(9, "sweep throughput and reproducibility",
         f.grid.size() == 3360 && f.seconds < 600 && identical && f.result.failures() == 0,
         std::to_string(f.grid.size()) + " simulations in " + fmt(f.seconds, 3) + " s on " +
             std::to_string(default_workers()) + " workers; reruns" + detail + (identical ? " identical" : " differ"));
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void end_to_end() {
#ifndef METAPOP_CLI
  report(10, "end-to-end determinism", false, "CLI path not configured");
#else
  const fs::path root = fs::temp_directory_path() / ("metapop-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"seed": 11, "synth": {"locations": 20, "friday_bridge": 10},
  "sweep": {"i0": [1, 100], "r0": [1.5, 7.5], "horizon_days": 200}})";
  }
  const char* stages[] = {"synth", "ingest", "matrices", "sweep", "network", "communities", "activity", "report"};
  bool ran = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const char* run : {"a", "b"}) {
    for (const char* stage : stages) {
      const std::string cmd = std::string("METAPOP_LOG=warn \"") + METAPOP_CLI + "\" " + stage + " --config \"" +
                              (root / "config.json").string() + "\" --out \"" + (root / run).string() +
                              "\" --workers " + (run[0] == 'a' ? "1" : "2");
      if (std::system(cmd.c_str()) != 0) {
        ran = false;
        std::cerr << "command failed: " << cmd << '\n';
      }
    }
  }
  std::vector<fs::path> files_a, files_b;
  for (const auto& [dir, files] : {std::pair{root / "a", &files_a}, std::pair{root / "b", &files_b}})
    if (fs::exists(dir))
      for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files->push_back(fs::relative(e.path(), dir));
  std::sort(files_a.begin(), files_a.end());
  std::sort(files_b.begin(), files_b.end());
  int differing = 0;
  if (files_a == files_b)
    for (const auto& f : files_a)
      if (slurp(root / "a" / f) != slurp(root / "b" / f)) ++differing;
  const bool pass = ran && !files_a.empty() && files_a == files_b && differing == 0;
  report(10, "end-to-end determinism", pass,
         std::to_string(files_a.size()) + " files per tree, " + std::to_string(differing) + " differ" +
             (files_a == files_b ? "" : ", file lists differ") + ", " + fmt(seconds_since(t0), 3) + " s");
  fs::remove_all(root);
#endif
}

}  // namespace

int main() {
  try {
    scalar_oracle();
    conservation();
    const auto full = run_full_sweep();
    metric_monotonicity(full);
    friday_effect();
    path_oracle();
    centrality_signs();
    community_recovery();
    activity_fixtures();
    sweep_throughput(full);
    end_to_end();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
