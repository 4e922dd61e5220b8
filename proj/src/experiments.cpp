#include "kkl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "kkl/error.hpp"
#include "kkl/rng.hpp"

namespace kkl {

std::string to_string(Scenario s) { return s == Scenario::InitError ? "init_error" : "noise"; }

namespace {

Scenario scenario_from_string(const std::string& s) {
  if (s == "init_error") return Scenario::InitError;
  if (s == "noise") return Scenario::Noise;
  throw Error(ErrorKind::ConfigError, "unknown scenario '" + s + "'");
}

// Runs task(i) for i in [0, count) on up to KKL_THREADS workers.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task) {
  const unsigned threads = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            task(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

int common_filter_dim(const std::vector<PreparedObserver>& observers) {
  if (observers.empty()) throw Error(ErrorKind::ConfigError, "no observers configured");
  const int m = observers.front().bank.size();
  for (const auto& obs : observers) {
    if (obs.bank.size() != m) throw Error(ErrorKind::ConfigError, "observers must share the filter dimension");
    if (!obs.dataset) throw Error(ErrorKind::ConfigError, "observer '" + obs.name + "' has no dataset");
  }
  return m;
}

// Time of the last sample above tol, or 0 if none.
double last_violation(const std::vector<double>& times, const std::vector<double>& err, double tol) {
  for (std::size_t i = err.size(); i-- > 0;) {
    if (err[i] > tol) return times[i];
  }
  return 0.0;
}

}  // namespace

ObserverRun simulate_observer(const DynamicalSystem& system, const FilterBank& bank, const KklDataset& ds,
                              const Vec& x0, const Vec& z0, double horizon, double dt,
                              const std::function<double(double)>& noise, bool record) {
  const int n = system.n;
  const int m = bank.size();
  if (x0.size() != n || z0.size() != m) throw Error(ErrorKind::ConfigError, "initial state dimension mismatch");
  ObserverRun run;
  Vec x(n), z(m);
  auto observe = [&](double t, std::span<const double> s) {
    for (int i = 0; i < n; ++i) x[i] = s[static_cast<std::size_t>(i)];
    for (int i = 0; i < m; ++i) z[i] = s[static_cast<std::size_t>(n + i)];
    const Lookup inv = Tinv_lookup(ds, z);
    const Lookup fwd = T_lookup(ds, x);
    run.times.push_back(t);
    run.err_x.push_back((inv.value - x).norm());
    run.err_z.push_back((z - fwd.value).norm());
    if (record) {
      run.x.push_back(x);
      run.z.push_back(z);
      run.xhat.push_back(inv.value);
    }
  };
  std::vector<double> state(static_cast<std::size_t>(n + m));
  std::copy(x0.data(), x0.data() + n, state.begin());
  std::copy(z0.data(), z0.data() + m, state.begin() + n);
  observe(0.0, state);
  Interconnection link(system, bank, noise);
  link.run(state, 0.0, horizon, dt, observe);
  return run;
}

Stats summarize(const std::vector<double>& values) {
  Stats s;
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  // Summed in run order so the mean is reproducible.
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

std::vector<PreparedObserver> load_observers(const ScenarioConfig& cfg) {
  std::vector<PreparedObserver> out;
  for (const auto& spec : cfg.observers) {
    if (spec.dataset_path.empty() || !std::filesystem::exists(spec.dataset_path)) {
      throw Error(ErrorKind::ConfigError, "dataset for observer '" + spec.name + "' not found: '" +
                                              spec.dataset_path + "'");
    }
    out.push_back(PreparedObserver{spec.name, bank_from_json(spec.bank),
                                   std::make_shared<const KklDataset>(load_dataset(spec.dataset_path))});
  }
  return out;
}

std::vector<RunDraw> draw_runs(const ScenarioConfig& cfg, int filter_dim) {
  if (cfg.x0_count < 1) throw Error(ErrorKind::ConfigError, "x0_count must be >= 1");
  Xoshiro256 rng(cfg.seed);
  std::vector<RunDraw> draws;
  for (int r = 0; r < cfg.x0_count; ++r) {
    RunDraw d;
    d.x0.resize(cfg.x0_box.dim());
    for (int i = 0; i < cfg.x0_box.dim(); ++i) d.x0[i] = rng.uniform(cfg.x0_box.lo[i], cfg.x0_box.hi[i]);
    d.u.resize(filter_dim);
    rng.unit_vector(std::span<double>(d.u.data(), static_cast<std::size_t>(filter_dim)));
    draws.push_back(std::move(d));
  }
  return draws;
}

double calibrate_error_floor(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers) {
  const int m = common_filter_dim(observers);
  const DynamicalSystem system = make_plant(cfg.plant);
  const auto draws = draw_runs(cfg, m);
  const std::size_t tasks = draws.size() * observers.size();
  std::vector<double> worst(tasks, 0.0);
  parallel_for(tasks, [&](std::size_t i) {
    const auto& obs = observers[i % observers.size()];
    const auto& draw = draws[i / observers.size()];
    const Vec z0 = T_lookup(*obs.dataset, draw.x0).value;
    const ObserverRun run = simulate_observer(system, obs.bank, *obs.dataset, draw.x0, z0, cfg.horizon, cfg.dt, {}, false);
    worst[i] = *std::max_element(run.err_x.begin(), run.err_x.end());
  });
  return *std::max_element(worst.begin(), worst.end());
}

namespace {

Json scenario_config_json(const ScenarioConfig& cfg) {
  Json observers = Json::array();
  for (const auto& o : cfg.observers) observers.push_back({{"name", o.name}, {"bank", o.bank}, {"dataset", o.dataset_path}});
  Json j = {{"scenario", to_string(cfg.scenario)},
            {"plant", cfg.plant},
            {"x0_count", cfg.x0_count},
            {"seed", cfg.seed},
            {"horizon", cfg.horizon},
            {"dt", cfg.dt},
            {"x0_box", box_to_json(cfg.x0_box)},
            {"observers", observers}};
  if (cfg.scenario == Scenario::InitError) {
    j["init_error_norm"] = cfg.init_error_norm;
    j["convergence_tol_z"] = cfg.convergence_tol_z;
    j["tolerance_factor"] = cfg.tolerance_factor;
    if (cfg.convergence_tol_x) j["convergence_tol_x"] = *cfg.convergence_tol_x;
    else j["convergence_tol_x"] = "auto";
  } else {
    j["noise"] = {{"amplitude", cfg.noise.amplitude}, {"frequency", cfg.noise.frequency}};
    j["steady_window"] = cfg.steady_window.value_or(0.2 * cfg.horizon);
  }
  return j;
}

}  // namespace

BenchReport run_scenario1(const ScenarioConfig& cfg) { return run_scenario1(cfg, load_observers(cfg)); }

BenchReport run_scenario1(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers) {
  if (cfg.scenario != Scenario::InitError) throw Error(ErrorKind::ConfigError, "config is not an init-error scenario");
  const int m = common_filter_dim(observers);
  const DynamicalSystem system = make_plant(cfg.plant);
  const auto draws = draw_runs(cfg, m);

  BenchReport report;
  report.scenario = cfg.scenario;
  report.seed = cfg.seed;
  report.config = scenario_config_json(cfg);
  if (cfg.convergence_tol_x) {
    report.tolerance_x = *cfg.convergence_tol_x;
  } else {
    report.error_floor = calibrate_error_floor(cfg, observers);
    report.tolerance_x = cfg.tolerance_factor * report.error_floor;
  }
  if (!(report.tolerance_x > 0.0)) throw Error(ErrorKind::ConfigError, "convergence tolerance must be positive");

  const std::size_t runs = draws.size();
  std::vector<double> conv(runs * observers.size()), conv_z(runs * observers.size());
  std::vector<char> flags(runs * observers.size(), 0);
  parallel_for(conv.size(), [&](std::size_t i) {
    const auto& obs = observers[i / runs];
    const auto& draw = draws[i % runs];
    const Vec z0 = T_lookup(*obs.dataset, draw.x0).value + cfg.init_error_norm * draw.u;
    const ObserverRun run = simulate_observer(system, obs.bank, *obs.dataset, draw.x0, z0, cfg.horizon, cfg.dt, {}, false);
    const double t = last_violation(run.times, run.err_x, report.tolerance_x);
    flags[i] = run.err_x.back() > report.tolerance_x;
    conv[i] = flags[i] ? cfg.horizon : t;
    conv_z[i] = last_violation(run.times, run.err_z, cfg.convergence_tol_z);
  });

  for (std::size_t o = 0; o < observers.size(); ++o) {
    ObserverResult res;
    res.name = observers[o].name;
    res.values.assign(conv.begin() + static_cast<std::ptrdiff_t>(o * runs),
                      conv.begin() + static_cast<std::ptrdiff_t>((o + 1) * runs));
    res.conv_time_z.assign(conv_z.begin() + static_cast<std::ptrdiff_t>(o * runs),
                           conv_z.begin() + static_cast<std::ptrdiff_t>((o + 1) * runs));
    for (std::size_t r = 0; r < runs; ++r) res.unconverged.push_back(flags[o * runs + r] != 0);
    res.stats = summarize(res.values);
    report.observers.push_back(std::move(res));
  }
  return report;
}

BenchReport run_scenario2(const ScenarioConfig& cfg) { return run_scenario2(cfg, load_observers(cfg)); }

BenchReport run_scenario2(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers) {
  if (cfg.scenario != Scenario::Noise) throw Error(ErrorKind::ConfigError, "config is not a noise scenario");
  if (cfg.noise.amplitude == 0.0) throw Error(ErrorKind::ZeroAmplitude, "noise gain undefined for zero amplitude");
  const int m = common_filter_dim(observers);
  const DynamicalSystem system = make_plant(cfg.plant);
  const auto draws = draw_runs(cfg, m);
  const double window = cfg.steady_window.value_or(0.2 * cfg.horizon);
  const double amplitude = cfg.noise.amplitude;
  const double frequency = cfg.noise.frequency;
  const std::function<double(double)> noise = [amplitude, frequency](double t) {
    return amplitude * std::sin(frequency * t);
  };

  BenchReport report;
  report.scenario = cfg.scenario;
  report.seed = cfg.seed;
  report.config = scenario_config_json(cfg);

  const std::size_t runs = draws.size();
  std::vector<double> gains(runs * observers.size());
  parallel_for(gains.size(), [&](std::size_t i) {
    const auto& obs = observers[i / runs];
    const auto& draw = draws[i % runs];
    const Vec z0 = T_lookup(*obs.dataset, draw.x0).value;
    const ObserverRun run = simulate_observer(system, obs.bank, *obs.dataset, draw.x0, z0, cfg.horizon, cfg.dt, noise, false);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      if (run.times[k] >= cfg.horizon - window) {
        sum += run.err_x[k] * run.err_x[k];
        ++count;
      }
    }
    gains[i] = count ? std::sqrt(sum / static_cast<double>(count)) / std::abs(amplitude) : 0.0;
  });

  for (std::size_t o = 0; o < observers.size(); ++o) {
    ObserverResult res;
    res.name = observers[o].name;
    res.values.assign(gains.begin() + static_cast<std::ptrdiff_t>(o * runs),
                      gains.begin() + static_cast<std::ptrdiff_t>((o + 1) * runs));
    res.stats = summarize(res.values);
    report.observers.push_back(std::move(res));
  }
  return report;
}

void emit_run_series(const ObserverRun& run, const std::string& path) {
  std::FILE* file = std::fopen(path.c_str(), "w");
  if (!file) throw Error(ErrorKind::IoError, "cannot write " + path);
  const Eigen::Index n = run.x.empty() ? 0 : run.x.front().size();
  const Eigen::Index m = run.z.empty() ? 0 : run.z.front().size();
  std::fprintf(file, "t");
  for (Eigen::Index i = 0; i < n; ++i) std::fprintf(file, ",x%ld", static_cast<long>(i + 1));
  for (Eigen::Index i = 0; i < m; ++i) std::fprintf(file, ",z%ld", static_cast<long>(i + 1));
  for (Eigen::Index i = 0; i < n; ++i) std::fprintf(file, ",xhat%ld", static_cast<long>(i + 1));
  std::fprintf(file, ",err_x,err_z\n");
  const std::size_t rows = run.x.empty() ? 0 : run.times.size();
  for (std::size_t r = 0; r < rows; ++r) {
    std::fprintf(file, "%.16e", run.times[r]);
    for (Eigen::Index i = 0; i < n; ++i) std::fprintf(file, ",%.16e", run.x[r][i]);
    for (Eigen::Index i = 0; i < m; ++i) std::fprintf(file, ",%.16e", run.z[r][i]);
    for (Eigen::Index i = 0; i < n; ++i) std::fprintf(file, ",%.16e", run.xhat[r][i]);
    std::fprintf(file, ",%.16e,%.16e\n", run.err_x[r], run.err_z[r]);
  }
  const bool failed = std::ferror(file) != 0;
  std::fclose(file);
  if (failed) throw Error(ErrorKind::IoError, "write failed for " + path);
}

ObserverRun read_run_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, path + ": missing header");
  int n = 0, m = 0;
  {
    std::stringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) {
      if (name.rfind("xhat", 0) == 0) continue;
      if (name[0] == 'x') ++n;
      if (name[0] == 'z') ++m;
    }
  }
  ObserverRun run;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      v.push_back(std::strtod(p, &end));
      if (end == p) throw Error(ErrorKind::IoError, path + ": bad number");
      p = (*end == ',') ? end + 1 : end;
    }
    if (v.size() != static_cast<std::size_t>(1 + 2 * n + m + 2)) throw Error(ErrorKind::IoError, path + ": bad row width");
    run.times.push_back(v[0]);
    run.x.push_back(Eigen::Map<const Vec>(v.data() + 1, n));
    run.z.push_back(Eigen::Map<const Vec>(v.data() + 1 + n, m));
    run.xhat.push_back(Eigen::Map<const Vec>(v.data() + 1 + n + m, n));
    run.err_x.push_back(v[static_cast<std::size_t>(1 + 2 * n + m)]);
    run.err_z.push_back(v[static_cast<std::size_t>(2 + 2 * n + m)]);
  }
  return run;
}

Table aggregate_table(const BenchReport& convergence, const BenchReport& noise) {
  std::vector<std::string> names;
  for (const auto& o : convergence.observers) names.push_back(o.name);
  std::vector<std::string> other;
  for (const auto& o : noise.observers) other.push_back(o.name);
  if (names != other) throw Error(ErrorKind::MismatchedObservers, "scenario reports cover different observers");

  Table table;
  std::ostringstream out;
  out << std::left << std::setw(26) << "";
  for (const auto& name : names) out << std::right << std::setw(14) << name;
  out << '\n';
  table.json = {{"observers", names}, {"tolerance_x", convergence.tolerance_x}};
  auto block = [&](const char* title, const char* key, const BenchReport& report) {
    const std::pair<const char*, double Stats::*> rows[] = {{"Min", &Stats::min}, {"Max", &Stats::max}, {"Mean", &Stats::mean}};
    Json section = Json::object();
    for (const auto& [label, member] : rows) {
      out << std::left << std::setw(20) << title << std::setw(6) << label;
      Json cells = Json::object();
      for (const auto& obs : report.observers) {
        out << std::right << std::setw(14) << std::fixed << std::setprecision(2) << obs.stats.*member;
        cells[obs.name] = obs.stats.*member;
      }
      out << '\n';
      section[label] = cells;
    }
    table.json[key] = section;
  };
  block("Convergence time", "convergence_time", convergence);
  block("Gain w.r.t. noise", "noise_gain", noise);
  table.text = out.str();
  return table;
}

Json report_to_json(const BenchReport& report) {
  Json observers = Json::array();
  for (const auto& o : report.observers) {
    Json entry = {{"name", o.name},
                  {"min", o.stats.min},
                  {"max", o.stats.max},
                  {"mean", o.stats.mean},
                  {"values", o.values}};
    if (!o.unconverged.empty()) {
      std::vector<int> flags(o.unconverged.begin(), o.unconverged.end());
      entry["unconverged"] = flags;
      entry["conv_time_z"] = o.conv_time_z;
    }
    observers.push_back(std::move(entry));
  }
  return {{"scenario", to_string(report.scenario)},
          {"seed", report.seed},
          {"tolerance_x", report.tolerance_x},
          {"error_floor", report.error_floor},
          {"config", report.config},
          {"observers", observers}};
}

BenchReport report_from_json(const Json& j) {
  BenchReport report;
  try {
    report.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    report.seed = j.value("seed", std::uint64_t{0});
    report.tolerance_x = j.value("tolerance_x", 0.0);
    report.error_floor = j.value("error_floor", 0.0);
    report.config = j.value("config", Json::object());
    for (const auto& o : j.at("observers")) {
      ObserverResult res;
      res.name = o.at("name").get<std::string>();
      res.values = o.at("values").get<std::vector<double>>();
      res.stats = summarize(res.values);
      if (o.contains("unconverged")) {
        for (int f : o.at("unconverged").get<std::vector<int>>()) res.unconverged.push_back(f != 0);
      }
      if (o.contains("conv_time_z")) res.conv_time_z = o.at("conv_time_z").get<std::vector<double>>();
      report.observers.push_back(std::move(res));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad report: ") + e.what());
  }
  return report;
}

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("bad field '") + key + "': " + e.what());
  }
}

void apply_common(const Json& j, ScenarioConfig& cfg) {
  cfg.plant = get_or<std::string>(j, "plant", cfg.plant);
  cfg.x0_count = get_or<int>(j, "x0_count", cfg.x0_count);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.horizon = get_or<double>(j, "horizon", cfg.horizon);
  cfg.dt = get_or<double>(j, "dt", cfg.dt);
  if (j.contains("x0_box")) cfg.x0_box = box_from_json(j.at("x0_box"));
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "experiment config must be a JSON object");
  ExperimentConfig cfg;
  ScenarioConfig base;
  apply_common(j, base);
  if (!j.contains("observers") || !j.at("observers").is_array() || j.at("observers").empty()) {
    throw Error(ErrorKind::ConfigError, "config needs a non-empty 'observers' array");
  }
  for (const auto& o : j.at("observers")) {
    ObserverSpec spec;
    spec.name = get_or<std::string>(o, "name", "");
    if (spec.name.empty()) throw Error(ErrorKind::ConfigError, "every observer needs a name");
    if (!o.contains("bank")) throw Error(ErrorKind::ConfigError, "observer '" + spec.name + "' needs a bank");
    spec.bank = o.at("bank");
    bank_from_json(spec.bank);  // validate early
    spec.dataset_path = get_or<std::string>(o, "dataset", "");
    base.observers.push_back(std::move(spec));
  }
  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    cfg.dataset_grid = get_or<int>(d, "grid", cfg.dataset_grid);
    if (d.contains("box") && d.at("box").is_object()) cfg.dataset_box = box_from_json(d.at("box"));
    cfg.invariance_horizon = get_or<double>(d, "invariance_horizon", cfg.invariance_horizon);
    cfg.invariance_grid = get_or<int>(d, "invariance_grid", cfg.invariance_grid);
  }

  cfg.scenario1 = base;
  cfg.scenario1.scenario = Scenario::InitError;
  if (j.contains("scenario1")) {
    const Json& s = j.at("scenario1");
    apply_common(s, cfg.scenario1);
    cfg.scenario1.init_error_norm = get_or<double>(s, "init_error_norm", cfg.scenario1.init_error_norm);
    cfg.scenario1.convergence_tol_z = get_or<double>(s, "convergence_tol_z", cfg.scenario1.convergence_tol_z);
    cfg.scenario1.tolerance_factor = get_or<double>(s, "tolerance_factor", cfg.scenario1.tolerance_factor);
    if (s.contains("convergence_tol_x") && s.at("convergence_tol_x").is_number()) {
      cfg.scenario1.convergence_tol_x = s.at("convergence_tol_x").get<double>();
    }
  }
  cfg.scenario2 = base;
  cfg.scenario2.scenario = Scenario::Noise;
  if (j.contains("scenario2")) {
    const Json& s = j.at("scenario2");
    apply_common(s, cfg.scenario2);
    if (s.contains("noise")) {
      cfg.scenario2.noise.amplitude = get_or<double>(s.at("noise"), "amplitude", cfg.scenario2.noise.amplitude);
      cfg.scenario2.noise.frequency = get_or<double>(s.at("noise"), "frequency", cfg.scenario2.noise.frequency);
    }
    if (s.contains("steady_window")) cfg.scenario2.steady_window = get_or<double>(s, "steady_window", 0.0);
  }
  cfg.series_seed = cfg.scenario1.seed;
  return cfg;
}

Box dataset_box(const ExperimentConfig& cfg, const DynamicalSystem& system) {
  if (cfg.dataset_box) return *cfg.dataset_box;
  const Box& x0 = cfg.scenario1.x0_box;
  const InvarianceReport inv =
      check_forward_invariance(system, x0, x0, cfg.invariance_horizon, cfg.invariance_grid, cfg.scenario1.dt);
  if (!std::isfinite(inv.visited.lo.sum()) || !std::isfinite(inv.visited.hi.sum())) {
    throw Error(ErrorKind::NonFinite, "plant trajectories from the initial box diverge");
  }
  return inv.visited.inflated(0.05);
}

std::vector<PreparedObserver> prepare_observers(const ExperimentConfig& cfg, const std::string& dataset_dir,
                                                std::ostream* log) {
  const DynamicalSystem system = make_plant(cfg.scenario1.plant);
  std::optional<Box> box;
  std::vector<PreparedObserver> out;
  for (const auto& spec : cfg.scenario1.observers) {
    FilterBank bank = bank_from_json(spec.bank);
    std::string path = spec.dataset_path;
    if (path.empty()) path = (std::filesystem::path(dataset_dir) / (spec.name + ".csv")).string();
    std::shared_ptr<const KklDataset> ds;
    if (std::filesystem::exists(path)) {
      auto loaded = std::make_shared<const KklDataset>(load_dataset(path));
      if (loaded->meta().grid == cfg.dataset_grid && loaded->meta().bank == bank_to_json(bank) &&
          loaded->meta().plant == system.name) {
        ds = std::move(loaded);
        if (log) *log << "loaded " << path << " (" << ds->size() << " pairs)\n";
      }
    }
    if (!ds) {
      if (!box) box = dataset_box(cfg, system);
      if (log) *log << "generating " << path << " (" << cfg.dataset_grid << "^" << system.n << " grid)\n";
      auto generated = std::make_shared<const KklDataset>(
          generate_dataset(system, bank, *box, cfg.dataset_grid, cfg.scenario1.dt));
      const auto parent = std::filesystem::path(path).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      save_dataset(*generated, path);
      ds = std::move(generated);
    }
    out.push_back(PreparedObserver{spec.name, std::move(bank), std::move(ds)});
  }
  return out;
}

}  // namespace kkl
