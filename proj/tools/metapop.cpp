// metapop: command-line pipeline
//
//   synth -> ingest -> matrices -> simulate | sweep -> network -> communities
//         -> activity -> report
//
// Every command writes into <out>/<command>.partial/ and renames it to
// <out>/<command>/ once all files and the manifest are complete.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metapop/metapop.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace metapop;

#ifndef METAPOP_VERSION
#define METAPOP_VERSION "dev"
#endif

namespace {

/// Bad configuration; reported with the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// logging

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* v = std::getenv("METAPOP_LOG");
    if (!v) return Level::info;
    std::string s(v);
    if (s == "quiet" || s == "0") return Level::quiet;
    if (s == "warn" || s == "1") return Level::warn;
    if (s == "debug" || s == "3") return Level::debug;
    return Level::info;
  }();
  return level;
}

template <typename... Args>
void log(Level level, const Args&... args) {
  if (level > log_level()) return;
  static const char* names[] = {"", "warn", "info", "debug"};
  std::cerr << "[metapop " << names[static_cast<int>(level)] << "] ";
  (std::cerr << ... << args);
  std::cerr << '\n';
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// configuration

struct Context {
  fs::path out;
  json config = json::object();
  std::optional<std::uint64_t> seed_flag;
  unsigned workers = default_workers();

  std::uint64_t seed() const {
    if (seed_flag) return *seed_flag;
    if (config.contains("seed")) return config["seed"].get<std::uint64_t>();
    return 1;
  }

  /// Value at a JSON pointer such as "/sweep/i0", or `fallback`.
  template <typename T>
  T get(const std::string& pointer, T fallback) const {
    const json::json_pointer p(pointer);
    if (!config.contains(p)) return fallback;
    try {
      return config.at(p).get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config " + pointer + ": " + e.what());
    }
  }
  bool has(const std::string& pointer) const { return config.contains(json::json_pointer(pointer)); }
  const json& at(const std::string& pointer) const { return config.at(json::json_pointer(pointer)); }
};

PeriodIndex period_arg(const std::string& s, const std::string& what) {
  auto p = parse_period_index(s);
  if (!p) throw UsageError(what + ": expected a period like \"fri/morning\", got \"" + s + "\"");
  return *p;
}

int clock_minutes(const std::string& s, const std::string& what) {
  auto t = parse_timestamp("2000-01-01T" + s);
  if (!t) throw UsageError(what + ": expected HH:MM, got \"" + s + "\"");
  return t->minute_of_day;
}

std::string minutes_label(int m) { return format_timestamp({Date{}, m}).substr(11); }

// ---------------------------------------------------------------------------
// stage directories and manifests

std::vector<fs::path> files_below(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

class Stage {
 public:
  Stage(const Context& ctx, std::string name) : ctx_(ctx), name_(std::move(name)) {
    dir_ = ctx_.out / (name_ + ".partial");
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    manifest_["command"] = name_;
    manifest_["version"] = METAPOP_VERSION;
    manifest_["seed"] = ctx_.seed();
    manifest_["config"] = ojson::object();
    manifest_["inputs"] = ojson::array();
  }
  Stage(const Stage&) = delete;
  Stage& operator=(const Stage&) = delete;
  ~Stage() {
    std::error_code ec;
    if (!committed_) fs::remove_all(dir_, ec);
  }

  fs::path path(const fs::path& rel) const { return dir_ / rel; }
  std::ofstream open(const fs::path& rel) const { return open_output(dir_ / rel); }
  ojson& config() { return manifest_["config"]; }
  ojson& notes() { return manifest_["notes"]; }

  /// Records an input file's checksum. Files inside the output tree are
  /// named relative to it so manifests do not depend on where --out points.
  void input(const fs::path& p) {
    std::string label = p.generic_string();
    const auto rel = fs::relative(fs::absolute(p), fs::absolute(ctx_.out));
    if (!rel.empty() && rel.native().rfind("..", 0) != 0) label = rel.generic_string();
    manifest_["inputs"].push_back({{"path", label}, {"fnv1a", hex64(fnv1a_file(p))}});
  }

  void commit() {
    auto outputs = ojson::array();
    for (const auto& f : files_below(dir_))
      outputs.push_back({{"path", f.generic_string()},
                         {"bytes", fs::file_size(dir_ / f)},
                         {"fnv1a", hex64(fnv1a_file(dir_ / f))}});
    manifest_["outputs"] = outputs;
    {
      auto out = open("manifest.json");
      out << manifest_.dump(2) << '\n';
      if (!out) throw Error("failed writing manifest for " + name_);
    }
    const fs::path final_dir = ctx_.out / name_;
    fs::remove_all(final_dir);
    fs::rename(dir_, final_dir);
    committed_ = true;
    log(Level::info, name_, ": wrote ", final_dir.string());
  }

 private:
  const Context& ctx_;
  std::string name_;
  fs::path dir_;
  ojson manifest_;
  bool committed_ = false;
};

/// Path of an upstream artifact; a missing one names the command to run.
fs::path upstream(const Context& ctx, const std::string& command, const fs::path& file) {
  const fs::path p = ctx.out / command / file;
  if (!fs::exists(p))
    throw Error("missing " + p.string() + "; run `metapop " + command + "` with the same --out first");
  return p;
}

ojson read_manifest(const Context& ctx, const std::string& command) {
  auto in = open_input(upstream(ctx, command, "manifest.json"));
  return ojson::parse(in);
}

// ---------------------------------------------------------------------------
// shared readers

struct Inputs {
  StationRegistry registry;
  std::vector<DistrictPopulation> districts;
  PopulationVector populations;
};

Inputs read_ingested(const Context& ctx, Stage& stage) {
  Inputs in;
  const auto sp = upstream(ctx, "ingest", "stations.csv");
  const auto dp = upstream(ctx, "ingest", "districts.csv");
  stage.input(sp);
  stage.input(dp);
  auto s = open_input(sp);
  in.registry = StationRegistry::read_csv(s);
  auto d = open_input(dp);
  in.districts = read_districts_csv(d);
  in.populations = allocate_population(in.districts, in.registry);
  return in;
}

std::vector<TripRecord> read_trip_file(const fs::path& p, const StationRegistry& reg) {
  auto in = open_input(p);
  auto parsed = parse_trips(in, reg);
  if (!parsed.rejections.empty())
    throw Error(p.string() + " line " + std::to_string(parsed.rejections.front().line) + ": " +
                parsed.rejections.front().reason);
  return std::move(parsed.trips);
}

MatrixSet read_matrices(const Context& ctx, Stage& stage) {
  stage.input(upstream(ctx, "matrices", "manifest.json"));
  return read_matrix_set(ctx.out / "matrices");
}

std::vector<DiseaseParams> disease_grid(const Context& ctx) {
  std::vector<DiseaseParams> params;
  const double gamma = ctx.get<double>("/sweep/gamma", kDefaultGamma);
  if (ctx.has("/sweep/params")) {
    for (const auto& p : ctx.at("/sweep/params"))
      params.push_back({p.at("beta").get<double>(), p.value("gamma", gamma)});
  } else {
    for (double r0 : ctx.get<std::vector<double>>("/sweep/r0", {1.5, 7.5}))
      params.push_back(DiseaseParams::from_r0(r0, gamma));
  }
  for (const auto& p : params) {
    try {
      p.validate();
    } catch (const Error& e) {
      throw UsageError(std::string("config /sweep: ") + e.what());
    }
  }
  if (params.empty()) throw UsageError("config /sweep: no disease parameters");
  return params;
}

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const Context& ctx) {
  Stage stage(ctx, "synth");
  SynthConfig cfg;
  cfg.seed = ctx.get<std::uint64_t>("/synth/seed", ctx.seed());
  cfg.locations = ctx.get<int>("/synth/locations", cfg.locations);
  const auto layout = ctx.get<std::string>("/synth/layout", std::string(layout_name(cfg.layout)));
  if (auto l = parse_layout(layout)) cfg.layout = *l;
  else throw UsageError("config /synth/layout: unknown layout \"" + layout + "\"");
  cfg.gravity_exponent = ctx.get<double>("/synth/gravity_exponent", cfg.gravity_exponent);
  cfg.daily_trips = ctx.get<double>("/synth/daily_trips", cfg.daily_trips);
  cfg.weekend_volume = ctx.get<double>("/synth/weekend_volume", cfg.weekend_volume);
  cfg.friday_bridge = ctx.get<double>("/synth/friday_bridge", cfg.friday_bridge);
  cfg.commuter_fraction = ctx.get<double>("/synth/commuter_fraction", cfg.commuter_fraction);
  cfg.station_population = ctx.get<double>("/synth/station_population", cfg.station_population);
  cfg.population_jitter = ctx.get<double>("/synth/population_jitter", cfg.population_jitter);
  cfg.core_density = ctx.get<double>("/synth/core_density", cfg.core_density);
  cfg.spacing_km = ctx.get<double>("/synth/spacing_km", cfg.spacing_km);
  cfg.cluster_gap_km = ctx.get<double>("/synth/cluster_gap_km", cfg.cluster_gap_km);
  cfg.center_lat = ctx.get<double>("/synth/center_lat", cfg.center_lat);
  cfg.center_lon = ctx.get<double>("/synth/center_lon", cfg.center_lon);
  const auto week_start = ctx.get<std::string>("/synth/week_start", format_date(cfg.week_start));
  if (auto d = parse_date(week_start)) cfg.week_start = *d;
  else throw UsageError("config /synth/week_start: expected YYYY-MM-DD");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("config /synth: ") + e.what());
  }

  auto& echo = stage.config();
  echo["seed"] = cfg.seed;
  echo["locations"] = cfg.locations;
  echo["layout"] = layout_name(cfg.layout);
  echo["gravity_exponent"] = cfg.gravity_exponent;
  echo["daily_trips"] = cfg.daily_trips;
  echo["weekend_volume"] = cfg.weekend_volume;
  echo["friday_bridge"] = cfg.friday_bridge;
  echo["commuter_fraction"] = cfg.commuter_fraction;
  echo["station_population"] = cfg.station_population;
  echo["population_jitter"] = cfg.population_jitter;
  echo["core_density"] = cfg.core_density;
  echo["spacing_km"] = cfg.spacing_km;
  echo["cluster_gap_km"] = cfg.cluster_gap_km;
  echo["center_lat"] = cfg.center_lat;
  echo["center_lon"] = cfg.center_lon;
  echo["week_start"] = format_date(cfg.week_start);
  echo["rng"] = "mt19937_64, top-53-bit uniforms, inversion Poisson";

  Stopwatch clock;
  const auto city = generate_city(cfg);
  {
    auto out = stage.open("stations.csv");
    city.registry.write_csv(out);
  }
  {
    auto out = stage.open("districts.csv");
    write_districts_csv(out, city.districts);
  }
  {
    auto out = stage.open("trips.csv");
    write_trips_csv(out, city.trips);
  }
  {
    auto out = stage.open("layout.csv");
    out << "station,cluster,x_km,y_km\n";
    for (std::size_t k = 0; k < city.cluster.size(); ++k)
      out << k << ',' << city.cluster[k] << ',' << format_double(city.x_km[k]) << ','
          << format_double(city.y_km[k]) << '\n';
  }
  stage.notes()["trips"] = city.trips.size();
  stage.notes()["week_first"] = format_date(city.week.first);
  stage.notes()["week_last"] = format_date(city.week.last);
  log(Level::info, "synth: ", city.trips.size(), " trips over ", cfg.locations, " stations in ", clock.seconds(), " s");
  stage.commit();
}

// ---------------------------------------------------------------------------
// ingest

void cmd_ingest(const Context& ctx) {
  Stage stage(ctx, "ingest");
  auto source = [&](const std::string& key) {
    if (ctx.has("/inputs/" + key)) return fs::path(ctx.at("/inputs/" + key).get<std::string>());
    return upstream(ctx, "synth", key + ".csv");
  };
  const fs::path sp = source("stations"), dp = source("districts"), tp = source("trips");
  for (const auto& p : {sp, dp, tp}) stage.input(p);

  auto s = open_input(sp);
  const auto registry = StationRegistry::read_csv(s);
  auto d = open_input(dp);
  const auto districts = read_districts_csv(d);
  const auto populations = allocate_population(districts, registry);

  Stopwatch clock;
  auto t = open_input(tp);
  auto parsed = parse_trips(t, registry);

  std::optional<Week> week;
  if (ctx.has("/week/first")) {
    auto first = parse_date(ctx.get<std::string>("/week/first", ""));
    auto last = parse_date(ctx.get<std::string>("/week/last", ""));
    if (!first || !last) throw UsageError("config /week: expected first and last as YYYY-MM-DD");
    try {
      week = Week::make(*first, *last);
    } catch (const Error& e) {
      throw UsageError(std::string("config /week: ") + e.what());
    }
  } else if (!parsed.trips.empty()) {
    // default: the seven days starting with the earliest check-in
    Date first = parsed.trips.front().checkin_time.date;
    for (const auto& tr : parsed.trips) first = std::min(first, tr.checkin_time.date);
    week = Week::make(first, first + std::chrono::days{6});
  } else {
    throw Error("no valid trips in " + tp.string());
  }

  const auto in_week = select_week(parsed.trips, *week);
  const auto same_period = filter_same_period(in_week);

  stage.config()["week_first"] = format_date(week->first);
  stage.config()["week_last"] = format_date(week->last);
  {
    auto out = stage.open("stations.csv");
    registry.write_csv(out);
  }
  {
    auto out = stage.open("districts.csv");
    write_districts_csv(out, districts);
  }
  {
    auto out = stage.open("populations.csv");
    out << "location,population\n";
    for (std::size_t i = 0; i < populations.size(); ++i) out << i << ',' << populations.persons[i] << '\n';
  }
  {
    auto out = stage.open("week_trips.csv");
    write_trips_csv(out, in_week);
  }
  {
    auto out = stage.open("trips.csv");
    write_trips_csv(out, same_period);
  }
  {
    auto out = stage.open("rejections.csv");
    out << "line,reason\n";
    for (const auto& r : parsed.rejections) out << r.line << ',' << csv::escape(r.reason) << '\n';
  }
  auto& n = stage.notes();
  n["rows"] = parsed.rows;
  n["accepted"] = parsed.trips.size();
  n["rejected"] = parsed.rejections.size();
  n["in_week"] = in_week.size();
  n["same_period"] = same_period.size();
  n["locations"] = registry.size();
  n["population"] = populations.total();
  if (!parsed.rejections.empty()) log(Level::warn, "ingest: rejected ", parsed.rejections.size(), " rows");
  log(Level::info, "ingest: ", parsed.rows, " rows, ", same_period.size(), " single-period trips kept in ",
      clock.seconds(), " s");
  stage.commit();
}

// ---------------------------------------------------------------------------
// matrices

void cmd_matrices(const Context& ctx) {
  Stage stage(ctx, "matrices");
  const auto inputs = read_ingested(ctx, stage);
  const auto tp = upstream(ctx, "ingest", "trips.csv");
  stage.input(tp);
  const auto ingest = read_manifest(ctx, "ingest");
  const auto first = parse_date(ingest["config"]["week_first"].get<std::string>());
  const auto last = parse_date(ingest["config"]["week_last"].get<std::string>());
  const Week week = Week::make(*first, *last);

  Stopwatch clock;
  const auto trips = read_trip_file(tp, inputs.registry);
  MatrixSet set;
  set.week = week;
  set.hourly = build_hourly(trips, week, inputs.populations);
  set.periods = aggregate_periods(set.hourly.hours);
  set.weekly = weekly_average(set.periods);
  write_matrix_set(stage.path(""), set);
  for (const auto& c : set.hourly.clamps)
    log(Level::warn, "matrices: hour ", c.hour_of_week, " location ", c.location, " row sum ",
        format_double(c.row_sum), " rescaled to 1");

  const auto corr = period_correlations(set.periods);
  {
    auto out = stage.open("correlations.csv");
    out << "period_a,period_b,r,p\n";
    for (std::size_t a = 0; a < corr.n; ++a)
      for (std::size_t b = 0; b < corr.n; ++b) {
        const auto& c = corr.at(a, b);
        out << to_string(PeriodIndex::from_index(static_cast<int>(a))) << ','
            << to_string(PeriodIndex::from_index(static_cast<int>(b))) << ','
            << format_optional(c ? std::optional<double>(c->r) : std::nullopt) << ','
            << format_optional(c ? c->p : std::nullopt) << '\n';
      }
  }
  {
    const auto tree = hierarchical_cluster(corr);
    auto out = stage.open("dendrogram.csv");
    out << "step,left,right,height,size\n";
    auto label = [&](int id) {
      return id < tree.leaves ? to_string(PeriodIndex::from_index(id)) : "m" + std::to_string(id - tree.leaves);
    };
    for (std::size_t k = 0; k < tree.merges.size(); ++k) {
      const auto& m = tree.merges[k];
      out << 'm' << k << ',' << label(m.left) << ',' << label(m.right) << ',' << format_double(m.height) << ','
          << m.size << '\n';
    }
  }
  stage.notes()["trips"] = trips.size();
  stage.notes()["clamp_warnings"] = set.hourly.clamps.size();
  log(Level::info, "matrices: ", trips.size(), " trips binned in ", clock.seconds(), " s");
  stage.commit();
}

// ---------------------------------------------------------------------------
// simulate

void cmd_simulate(const Context& ctx) {
  Stage stage(ctx, "simulate");
  const auto inputs = read_ingested(ctx, stage);
  const auto set = read_matrices(ctx, stage);

  Scenario sc;
  sc.seed_location = ctx.get<StationId>("/simulate/seed_location", 0);
  sc.seed_time = period_arg(ctx.get<std::string>("/simulate/seed_time", "mon/morning"), "config /simulate/seed_time");
  sc.i0 = ctx.get<double>("/simulate/i0", 1.0);
  sc.horizon_days = ctx.get<int>("/simulate/horizon_days", 200);
  const double gamma = ctx.get<double>("/simulate/gamma", kDefaultGamma);
  sc.params = ctx.has("/simulate/r0") ? DiseaseParams::from_r0(ctx.get<double>("/simulate/r0", 1.5), gamma)
                                      : DiseaseParams{ctx.get<double>("/simulate/beta", 0.5 / 24.0), gamma};
  SimOptions opts;
  opts.arrival_threshold = ctx.get<double>("/simulate/arrival_threshold", opts.arrival_threshold);
  opts.record_series = true;

  auto& echo = stage.config();
  echo["seed_location"] = sc.seed_location;
  echo["seed_time"] = to_string(sc.seed_time);
  echo["i0"] = sc.i0;
  echo["beta"] = sc.params.beta;
  echo["gamma"] = sc.params.gamma;
  echo["r0"] = sc.params.r0();
  echo["horizon_days"] = sc.horizon_days;
  echo["arrival_threshold"] = opts.arrival_threshold;

  const auto result = simulate(sc, FlowSchedule(set.hourly.hours), inputs.populations, opts);
  const std::size_t n = inputs.populations.size();
  {
    auto out = stage.open("series.csv");
    out << "hour,day,S,I,R\n";
    for (std::size_t h = 0; h < result.series.size(); ++h) {
      const auto& t = result.series[h];
      out << h << ',' << h / 24 << ',' << format_double(t.S) << ',' << format_double(t.I) << ','
          << format_double(t.R) << '\n';
    }
  }
  {
    auto out = stage.open("arrivals.csv");
    out << "location,hour,day,period\n";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = result.arrivals.first(static_cast<StationId>(i));
      if (a) out << i << ',' << a->hour << ',' << a->day << ',' << period_name(a->period) << '\n';
      else out << i << ",NA,NA,NA\n";
    }
  }
  const auto phi = phi_curve(result.arrivals, n);
  {
    auto out = stage.open("phi.csv");
    out << "day,phi,new_locations\n";
    for (std::size_t d = 0; d < phi.size(); ++d)
      out << d << ',' << format_double(phi[d]) << ',' << result.arrivals.count_day(static_cast<int>(d)) << '\n';
  }
  auto& notes = stage.notes();
  notes["hours_run"] = result.hours_run;
  notes["peak_day"] = result.peak_day;
  notes["peak_infected"] = result.peak_infected;
  notes["final_size"] = result.final_size;
  notes["locations_reached"] = result.arrivals.reached();
  for (double t : {0.05, 0.10, 0.25, 0.50}) {
    auto g = days_to_threshold(phi, t);
    notes["gamma_" + format_double(t)] = g ? ojson(*g) : ojson(nullptr);
  }
  log(Level::info, "simulate: peak on day ", result.peak_day, ", ", result.arrivals.reached(), "/", n,
      " locations reached");
  stage.commit();
}

// ---------------------------------------------------------------------------
// sweep

void write_summary(std::ostream& out, const SweepGroup& g) {
  out << "location,mean_gamma10,mean_chi,unreached_count\n";
  for (std::size_t l = 0; l < g.locations.size(); ++l) {
    const auto& r = g.locations[l];
    out << l << ',' << format_optional(r.mean_gamma10) << ',' << format_optional(r.mean_chi) << ',' << r.unreached
        << '\n';
  }
}

void cmd_sweep(const Context& ctx) {
  Stage stage(ctx, "sweep");
  const auto inputs = read_ingested(ctx, stage);
  const auto set = read_matrices(ctx, stage);
  const std::size_t n = inputs.populations.size();

  SweepGrid grid;
  grid.params = disease_grid(ctx);
  grid.i0s = ctx.get<std::vector<double>>("/sweep/i0", {1.0, 100.0, 10000.0});
  grid.thresholds = ctx.get<std::vector<double>>("/sweep/thresholds", {0.05, 0.10, 0.25, 0.50});
  grid.horizon_days = ctx.get<int>("/sweep/horizon_days", 200);
  if (!ctx.has("/sweep/locations") || ctx.at("/sweep/locations") == "all") {
    for (std::size_t i = 0; i < n; ++i) grid.locations.push_back(static_cast<StationId>(i));
  } else {
    grid.locations = ctx.get<std::vector<StationId>>("/sweep/locations", {});
  }
  if (!ctx.has("/sweep/periods") || ctx.at("/sweep/periods") == "all") {
    for (int p = 0; p < kPeriodsPerWeek; ++p) grid.seed_times.push_back(PeriodIndex::from_index(p));
  } else {
    for (const auto& s : ctx.get<std::vector<std::string>>("/sweep/periods", {}))
      grid.seed_times.push_back(period_arg(s, "config /sweep/periods"));
  }
  for (StationId l : grid.locations)
    if (l < 0 || static_cast<std::size_t>(l) >= n) throw UsageError("config /sweep/locations: no location " + std::to_string(l));
  if (grid.size() == 0) throw UsageError("config /sweep: the scenario grid is empty");
  if (grid.horizon_days <= 0) throw UsageError("config /sweep/horizon_days must be positive");

  auto& echo = stage.config();
  echo["locations"] = grid.locations;
  {
    std::vector<std::string> names;
    for (auto p : grid.seed_times) names.push_back(to_string(p));
    echo["periods"] = names;
  }
  echo["i0"] = grid.i0s;
  auto params = ojson::array();
  for (const auto& p : grid.params) params.push_back({{"beta", p.beta}, {"gamma", p.gamma}, {"r0", p.r0()}});
  echo["params"] = params;
  echo["thresholds"] = grid.thresholds;
  echo["horizon_days"] = grid.horizon_days;
  echo["order"] = "scenario_id runs params, then i0, then location, then seed time";

  Stopwatch clock;
  const auto result = sweep(grid, FlowSchedule(set.hourly.hours), inputs.populations, ctx.workers);
  log(Level::info, "sweep: ", grid.size(), " scenarios in ", clock.seconds(), " s on ", ctx.workers, " workers");

  {
    auto out = stage.open("scenarios.csv");
    out << "scenario_id,group,seed,seed_time,i0,beta,gamma,ok";
    for (double t : grid.thresholds) out << ",gamma_" << format_double(t);
    out << ",reached,peak_day,final_size,error\n";
    for (const auto& s : result.scenarios) {
      out << s.id << ',' << s.param_index * grid.i0s.size() + s.i0_index << ',' << s.scenario.seed_location << ','
          << to_string(s.scenario.seed_time) << ',' << format_double(s.scenario.i0) << ','
          << format_double(s.scenario.params.beta) << ',' << format_double(s.scenario.params.gamma) << ','
          << (s.ok ? 1 : 0);
      for (std::size_t k = 0; k < grid.thresholds.size(); ++k) {
        const auto v = s.ok ? s.threshold_days[k] : std::nullopt;
        out << ',' << (v ? std::to_string(*v) : "NA");
      }
      out << ',' << (s.ok ? s.arrivals.reached() : 0) << ',' << s.peak_day << ',' << format_double(s.final_size)
          << ',' << csv::escape(s.error) << '\n';
    }
  }
  {
    auto out = stage.open("curves.csv");
    out << "scenario_id,seed,day,period,phi,new_locations\n";
    for (const auto& s : result.scenarios) {
      if (!s.ok) continue;
      int cumulative = 0;
      for (int d = 0; d < s.arrivals.days(); ++d)
        for (int p = 0; p < kPeriodsPerDay; ++p) {
          const int c = s.arrivals.count(d, static_cast<Period>(p));
          if (c == 0) continue;
          cumulative += c;
          out << s.id << ',' << s.scenario.seed_location << ',' << d << ',' << kPeriodNames[static_cast<std::size_t>(p)]
              << ',' << format_double(static_cast<double>(cumulative) / static_cast<double>(n)) << ',' << c << '\n';
        }
    }
  }
  {
    auto out = stage.open("groups.csv");
    out << "group,beta,gamma,r0,i0,summary\n";
    for (std::size_t g = 0; g < result.groups.size(); ++g) {
      const auto& grp = result.groups[g];
      out << g << ',' << format_double(grp.params.beta) << ',' << format_double(grp.params.gamma) << ','
          << format_double(grp.params.r0()) << ',' << format_double(grp.i0) << ",summary_g" << g << ".csv\n";
      auto s = stage.open("summary_g" + std::to_string(g) + ".csv");
      write_summary(s, grp);
    }
  }
  auto failures = ojson::array();
  for (const auto& s : result.scenarios)
    if (!s.ok) failures.push_back({{"scenario_id", s.id}, {"error", s.error}});
  stage.notes()["scenarios"] = result.scenarios.size();
  stage.notes()["failed"] = failures.size();
  stage.notes()["failures"] = failures;
  if (!failures.empty()) log(Level::warn, "sweep: ", failures.size(), " scenarios failed; see manifest");
  stage.commit();
}

// ---------------------------------------------------------------------------
// network

struct SummaryRow {
  std::optional<double> gamma10, chi;
  int unreached = 0;
};

SweepGroup read_summary(const fs::path& p, std::size_t n) {
  SweepGroup g;
  g.locations.resize(n);
  auto in = open_input(p);
  csv::for_each_row(in, "location,mean_gamma10,mean_chi,unreached_count", p.string(), [&](std::size_t line, const auto& f) {
    auto l = f.size() == 4 ? csv::parse_int<std::size_t>(f[0]) : std::nullopt;
    if (!l || *l >= n) throw Error(p.string() + " line " + std::to_string(line) + ": malformed row");
    auto& r = g.locations[*l];
    r.mean_gamma10 = f[1] == "NA" ? std::nullopt : csv::parse_double(f[1]);
    r.mean_chi = f[2] == "NA" ? std::nullopt : csv::parse_double(f[2]);
    r.unreached = csv::parse_int<int>(f[3]).value_or(0);
  });
  return g;
}

struct GroupInfo {
  std::size_t index = 0;
  double r0 = 0, i0 = 0;
};

std::vector<GroupInfo> read_groups(const Context& ctx, Stage& stage) {
  const auto p = upstream(ctx, "sweep", "groups.csv");
  stage.input(p);
  std::vector<GroupInfo> groups;
  auto in = open_input(p);
  csv::for_each_row(in, "group,beta,gamma,r0,i0,summary", "groups.csv", [&](std::size_t, const auto& f) {
    groups.push_back({csv::parse_int<std::size_t>(f[0]).value(), csv::parse_double(f[3]).value(),
                      csv::parse_double(f[4]).value()});
  });
  return groups;
}

void write_risk_table(std::ostream& r_out, std::ostream& p_out, const GroupInfo& g, const CorrelationTable& t) {
  for (std::size_t a = 0; a < t.n; ++a) {
    r_out << format_double(g.r0) << ',' << format_double(g.i0) << ',' << kRiskColumns[a];
    p_out << format_double(g.r0) << ',' << format_double(g.i0) << ',' << kRiskColumns[a];
    for (std::size_t b = 0; b < t.n; ++b) {
      const auto& c = t.at(a, b);
      r_out << ',' << format_optional(c ? std::optional<double>(c->r) : std::nullopt);
      p_out << ',' << format_optional(c ? c->p : std::nullopt);
    }
    r_out << '\n';
    p_out << '\n';
  }
}

void cmd_network(const Context& ctx) {
  Stage stage(ctx, "network");
  const auto inputs = read_ingested(ctx, stage);
  const auto set = read_matrices(ctx, stage);
  const std::size_t n = inputs.populations.size();
  const GeoPoint center{ctx.get<double>("/network/center/lat", 31.2235), ctx.get<double>("/network/center/lon", 121.4452)};
  const bool write_paths = ctx.get<bool>("/network/paths", true);
  stage.config()["center"] = {{"lat", center.latitude}, {"lon", center.longitude}};
  stage.config()["paths"] = write_paths;

  Stopwatch clock;
  std::optional<std::ofstream> paths_out;
  if (write_paths) {
    paths_out = stage.open("paths.csv");
    *paths_out << "day,i,j,probability,path\n";
  }
  auto coh = stage.open("coherence.csv");
  coh << "day,coherence,avg_distance,argmin_i,argmin_j,unreachable_pairs\n";
  for (int d = 0; d < kDaysPerWeek; ++d) {
    const auto daily = daily_paths(d, day_periods(set.periods, d), ctx.workers);
    const auto& s = daily.summary;
    coh << kDayNames[static_cast<std::size_t>(d)] << ',' << format_double(s.coherence) << ','
        << format_double(s.average) << ',' << s.argmin_i << ',' << s.argmin_j << ',' << s.unreachable_pairs << '\n';
    if (paths_out)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const auto& p = daily.paths[i * n + j];
          *paths_out << kDayNames[static_cast<std::size_t>(d)] << ',' << i << ',' << j << ','
                     << (p ? format_double(p->probability) : "0") << ',' << (p ? p->describe() : "") << '\n';
        }
  }

  const auto cent = centralities(set.weekly, inputs.registry, center);
  if (cent.clamped_entries > 0)
    log(Level::warn, "network: ", cent.clamped_entries, " weekly entries >= 1 clamped for closeness");
  {
    auto out = stage.open("centrality.csv");
    out << "location,k_in,k_out,c_in,c_out,d_center_km,in_reachable,out_reachable\n";
    for (std::size_t i = 0; i < n; ++i)
      out << i << ',' << format_double(cent.k_in[i]) << ',' << format_double(cent.k_out[i]) << ','
          << format_optional(cent.c_in[i]) << ',' << format_optional(cent.c_out[i]) << ','
          << format_double(cent.d_center_km[i]) << ',' << cent.in_reachable[i] << ',' << cent.out_reachable[i] << '\n';
  }

  const auto groups = read_groups(ctx, stage);
  auto r_out = stage.open("risk_correlations.csv");
  auto p_out = stage.open("risk_pvalues.csv");
  std::string header = "r0,i0,measure";
  for (auto c : kRiskColumns) header += "," + std::string(c);
  r_out << header << '\n';
  p_out << header << '\n';
  for (const auto& g : groups) {
    const auto sp = upstream(ctx, "sweep", "summary_g" + std::to_string(g.index) + ".csv");
    stage.input(sp);
    write_risk_table(r_out, p_out, g, risk_correlations(read_summary(sp, n), cent));
  }
  stage.notes()["clamped_entries"] = cent.clamped_entries;
  log(Level::info, "network: paths, centrality and correlations in ", clock.seconds(), " s");
  stage.commit();
}

// ---------------------------------------------------------------------------
// communities

void cmd_communities(const Context& ctx) {
  Stage stage(ctx, "communities");
  const auto inputs = read_ingested(ctx, stage);
  const auto set = read_matrices(ctx, stage);
  const double resolution = ctx.get<double>("/communities/resolution", 1.0);
  stage.config()["resolution"] = resolution;
  stage.config()["louvain_seed"] = ctx.seed();

  std::vector<CommunityPartition> parts(kPeriodsPerWeek);
  parallel_for(parts.size(), ctx.workers, [&](std::size_t p) {
    parts[p] = louvain(set.periods[p], ctx.seed(), resolution, PeriodIndex::from_index(static_cast<int>(p)));
  });

  auto summary = stage.open("summary.csv");
  summary << "period,communities,modularity,largest_community,largest_locations,largest_population_fraction\n";
  for (const auto& p : parts) {
    const auto share = largest_community_share(p, inputs.populations);
    summary << to_string(p.period) << ',' << p.communities() << ',' << format_double(p.modularity) << ','
            << share.community << ',' << share.locations << ',' << format_double(share.population_fraction) << '\n';
  }

  // Labels are chained day to day within each period slot so that a
  // community keeps its id while it persists.
  auto part_out = stage.open("partitions.csv");
  part_out << "period,location,community\n";
  auto trans = stage.open("transitions.csv");
  trans << "slot,day_from,day_to,community_from,community_to,count\n";
  std::vector<CommunityPartition> chained(kPeriodsPerWeek);
  for (int slot = 0; slot < kPeriodsPerDay; ++slot) {
    CommunityPartition prev = parts[static_cast<std::size_t>(slot)];
    chained[static_cast<std::size_t>(slot)] = prev;
    for (int d = 1; d < kDaysPerWeek; ++d) {
      const auto& cur = parts[static_cast<std::size_t>(d * kPeriodsPerDay + slot)];
      const auto t = transitions(prev, cur);
      for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c)
          if (t.at(r, c) > 0)
            trans << kPeriodNames[static_cast<std::size_t>(slot)] << ',' << kDayNames[static_cast<std::size_t>(d - 1)]
                  << ',' << kDayNames[static_cast<std::size_t>(d)] << ',' << r << ',' << c << ',' << t.at(r, c) << '\n';
      prev = relabel(cur, t);
      chained[static_cast<std::size_t>(d * kPeriodsPerDay + slot)] = prev;
    }
  }
  for (const auto& p : chained)
    for (std::size_t l = 0; l < p.assignment.size(); ++l)
      part_out << to_string(p.period) << ',' << l << ',' << p.assignment[l] << '\n';
  stage.commit();
}

// ---------------------------------------------------------------------------
// activity

void cmd_activity(const Context& ctx) {
  Stage stage(ctx, "activity");
  const auto inputs = read_ingested(ctx, stage);
  const auto set = read_matrices(ctx, stage);
  const auto tp = upstream(ctx, "ingest", "week_trips.csv");
  stage.input(tp);

  ActivityRules rules;
  rules.depart_before = clock_minutes(ctx.get<std::string>("/activity/depart_before", "10:00"), "config /activity/depart_before");
  rules.return_after = clock_minutes(ctx.get<std::string>("/activity/return_after", "17:00"), "config /activity/return_after");
  rules.nonwork_after = clock_minutes(ctx.get<std::string>("/activity/nonwork_after", "16:00"), "config /activity/nonwork_after");
  rules.second_work_share = ctx.get<double>("/activity/second_work_share", rules.second_work_share);
  const auto top_k = ctx.get<std::size_t>("/activity/top_k", 10);
  auto& echo = stage.config();
  echo["depart_before"] = minutes_label(rules.depart_before);
  echo["return_after"] = minutes_label(rules.return_after);
  echo["nonwork_after"] = minutes_label(rules.nonwork_after);
  echo["second_work_share"] = rules.second_work_share;
  echo["top_k"] = top_k;

  const auto trips = read_trip_file(tp, inputs.registry);
  const auto days = summarize_activity(build_schedules(trips), rules);
  {
    auto out = stage.open("motifs.csv");
    out << "date,motif,count\n";
    for (const auto& d : days)
      for (std::size_t m = 0; m < kMotifNames.size(); ++m)
        out << format_date(d.date) << ',' << kMotifNames[m] << ',' << d.motif_counts[m] << '\n';
  }
  {
    auto out = stage.open("recreation.csv");
    out << "date,n_w,n_e,rho\n";
    for (const auto& d : days)
      out << format_date(d.date) << ',' << d.recreation.workers << ',' << d.recreation.with_extra_stops << ','
          << format_optional(d.recreation.rho) << '\n';
  }
  {
    auto out = stage.open("top_destinations.csv");
    out << "day,rank,station,influx\n";
    for (int d = 0; d < kDaysPerWeek; ++d)
      for (const auto& t : top_destinations(set.periods[static_cast<std::size_t>(PeriodIndex{d, Period::afternoon}.index())], top_k))
        out << kDayNames[static_cast<std::size_t>(d)] << ',' << t.rank << ',' << t.station << ','
            << format_double(t.influx) << '\n';
  }
  stage.notes()["card_days"] = [&] {
    std::size_t total = 0;
    for (const auto& d : days)
      for (int c : d.motif_counts) total += static_cast<std::size_t>(c);
    return total;
  }();
  stage.commit();
}

// ---------------------------------------------------------------------------
// report

void cmd_report(const Context& ctx) {
  Stage stage(ctx, "report");
  const auto inputs = read_ingested(ctx, stage);
  const std::size_t n = inputs.populations.size();
  const auto groups = read_groups(ctx, stage);
  const auto sweep_manifest = read_manifest(ctx, "sweep");
  const int horizon = sweep_manifest["config"]["horizon_days"].get<int>();

  // scenario metadata
  struct Meta {
    std::size_t group = 0;
    std::string seed_time;
    bool ok = false;
    std::optional<double> gamma10;
  };
  std::map<std::size_t, Meta> meta;
  {
    const auto p = upstream(ctx, "sweep", "scenarios.csv");
    stage.input(p);
    auto in = open_input(p);
    std::string header;
    std::getline(in, header);
    const auto cols = csv::split(header);
    const auto col = [&](const std::string& name) {
      auto it = std::find(cols.begin(), cols.end(), name);
      if (it == cols.end()) throw Error("scenarios.csv lacks column " + name);
      return static_cast<std::size_t>(it - cols.begin());
    };
    const std::size_t c_id = col("scenario_id"), c_group = col("group"), c_time = col("seed_time"), c_ok = col("ok"),
                      c_g10 = col("gamma_0.1");
    std::string line;
    while (std::getline(in, line)) {
      if (csv::trim(line).empty()) continue;
      const auto f = csv::split(line);
      Meta m{csv::parse_int<std::size_t>(f[c_group]).value(), f[c_time], f[c_ok] == "1",
             f[c_g10] == "NA" ? std::nullopt : csv::parse_double(f[c_g10])};
      meta[csv::parse_int<std::size_t>(f[c_id]).value()] = m;
    }
  }

  // mean cumulative fraction of reached locations per seed time
  std::map<std::size_t, std::vector<int>> arrivals_by_day;  // scenario -> new locations per day
  {
    const auto p = upstream(ctx, "sweep", "curves.csv");
    stage.input(p);
    auto in = open_input(p);
    csv::for_each_row(in, "scenario_id,seed,day,period,phi,new_locations", "curves.csv", [&](std::size_t, const auto& f) {
      auto& v = arrivals_by_day[csv::parse_int<std::size_t>(f[0]).value()];
      if (v.empty()) v.assign(static_cast<std::size_t>(horizon), 0);
      v.at(csv::parse_int<std::size_t>(f[2]).value()) += csv::parse_int<int>(f[5]).value();
    });
  }
  struct Curve {
    std::vector<double> phi_sum;
    int scenarios = 0, reached10 = 0;
    double gamma10_sum = 0;
  };
  std::map<std::pair<std::size_t, std::string>, Curve> curves;
  std::vector<std::string> time_order;
  for (int p = 0; p < kPeriodsPerWeek; ++p) time_order.push_back(to_string(PeriodIndex::from_index(p)));
  for (const auto& [id, m] : meta) {
    if (!m.ok) continue;
    auto& c = curves[{m.group, m.seed_time}];
    if (c.phi_sum.empty()) c.phi_sum.assign(static_cast<std::size_t>(horizon), 0.0);
    ++c.scenarios;
    if (m.gamma10) {
      ++c.reached10;
      c.gamma10_sum += *m.gamma10;
    }
    int cumulative = 0;
    const auto it = arrivals_by_day.find(id);
    for (std::size_t d = 0; d < c.phi_sum.size(); ++d) {
      if (it != arrivals_by_day.end()) cumulative += it->second[d];
      c.phi_sum[d] += static_cast<double>(cumulative) / static_cast<double>(n);
    }
  }
  {
    auto curves_out = stage.open("spread_curves.csv");
    curves_out << "group,r0,i0,seed_time,day,mean_phi\n";
    auto risk = stage.open("seed_time_risk.csv");
    risk << "group,r0,i0,seed_time,scenarios,reached_10pct,mean_gamma10\n";
    for (const auto& g : groups)
      for (const auto& t : time_order) {
        auto it = curves.find({g.index, t});
        if (it == curves.end()) continue;
        const auto& c = it->second;
        for (std::size_t d = 0; d < c.phi_sum.size(); ++d)
          curves_out << g.index << ',' << format_double(g.r0) << ',' << format_double(g.i0) << ',' << t << ',' << d << ','
              << format_double(c.phi_sum[d] / c.scenarios) << '\n';
        risk << g.index << ',' << format_double(g.r0) << ',' << format_double(g.i0) << ',' << t << ',' << c.scenarios
             << ',' << c.reached10 << ','
             << format_optional(c.reached10 ? std::optional<double>(c.gamma10_sum / c.reached10) : std::nullopt)
             << '\n';
      }
  }

  // Gamma / chi per location, one file per group
  for (const auto& g : groups) {
    const auto sp = upstream(ctx, "sweep", "summary_g" + std::to_string(g.index) + ".csv");
    stage.input(sp);
    auto out = stage.open("risk_summary_g" + std::to_string(g.index) + ".csv");
    write_summary(out, read_summary(sp, n));
  }

  // Weekly network dynamics: coherence and average distance by weekday, rho by date
  {
    const auto cp = upstream(ctx, "network", "coherence.csv");
    const auto rp = upstream(ctx, "activity", "recreation.csv");
    stage.input(cp);
    stage.input(rp);
    std::map<std::string, std::pair<std::string, std::string>> network;
    auto cin = open_input(cp);
    csv::for_each_row(cin, "day,coherence,avg_distance,argmin_i,argmin_j,unreachable_pairs", "coherence.csv",
                      [&](std::size_t, const auto& f) { network[f[0]] = {f[1], f[2]}; });
    std::map<std::string, std::string> rho;
    auto rin = open_input(rp);
    csv::for_each_row(rin, "date,n_w,n_e,rho", "recreation.csv", [&](std::size_t, const auto& f) {
      if (auto d = parse_date(f[0])) rho[std::string(kDayNames[static_cast<std::size_t>(Timestamp{*d, 0}.weekday())])] = f[3];
    });
    auto out = stage.open("weekly_dynamics.csv");
    out << "day,coherence,avg_distance,rho\n";
    for (auto day : kDayNames) {
      const std::string d(day);
      const auto it = network.find(d);
      const auto rt = rho.find(d);
      out << d << ',' << (it != network.end() ? it->second.first : "NA") << ','
          << (it != network.end() ? it->second.second : "NA") << ',' << (rt != rho.end() ? rt->second : "NA") << '\n';
    }
  }

  // correlation table, copied from the network stage
  {
    const auto tp = upstream(ctx, "network", "risk_correlations.csv");
    stage.input(tp);
    fs::copy_file(tp, stage.path("risk_correlations.csv"));
  }
  stage.notes()["locations"] = n;
  stage.notes()["groups"] = groups.size();
  stage.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metapop: metapopulation epidemics on temporal mobility networks"};
  app.set_version_flag("--version", std::string(METAPOP_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  unsigned workers = default_workers();
  std::uint64_t seed = 0;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Context&);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic city (stations, districts, trips)", cmd_synth},
      {"ingest", "validate trips, select the week, allocate populations", cmd_ingest},
      {"matrices", "hourly, period and weekly flow matrices; period correlations", cmd_matrices},
      {"simulate", "one SIR introduction scenario", cmd_simulate},
      {"sweep", "the introduction-scenario grid and per-location risks", cmd_sweep},
      {"network", "temporal paths, coherence, centralities, risk correlations", cmd_network},
      {"communities", "Louvain partitions per period and day-to-day transitions", cmd_communities},
      {"activity", "daily activity motifs, recreational fraction, top destinations", cmd_activity},
      {"report", "collate curve data, weekly dynamics and correlation tables", cmd_report},
  };
  std::vector<CLI::Option*> seed_opts;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output root directory")->capture_default_str();
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    seed_opts.push_back(sub->add_option("--seed", seed, "seed for all randomness (overrides config)"));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Context ctx;
  ctx.out = out_dir;
  ctx.workers = workers;
  for (auto* o : seed_opts)
    if (o->count() > 0) ctx.seed_flag = seed;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      ctx.config = json::parse(in);
      if (!ctx.config.is_object()) throw UsageError("config must be a JSON object");
    }
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) c.run(ctx);
  } catch (const UsageError& e) {
    std::cerr << "metapop: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "metapop: configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "metapop: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
