#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kkl/config.hpp"
#include "kkl/kklmap.hpp"

namespace kkl {

enum class Scenario { InitError, Noise };

std::string to_string(Scenario s);

struct ObserverSpec {
  std::string name;
  Json bank;
  std::string dataset_path;
};

struct NoiseSpec {
  double amplitude = 0.1;
  double frequency = 10.0;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::InitError;
  std::vector<ObserverSpec> observers;
  std::string plant = "duffing";
  int x0_count = 100;
  std::uint64_t seed = 2024;
  double horizon = 20.0;
  double dt = 1e-3;
  Box x0_box = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  double init_error_norm = 100.0;
  NoiseSpec noise;
  // Unset: calibrate from noise-free, correctly initialised runs.
  std::optional<double> convergence_tol_x;
  double tolerance_factor = 1.25;
  double convergence_tol_z = 1e-2;
  // Unset: last 20% of the horizon.
  std::optional<double> steady_window;
};

struct ObserverRun {
  std::vector<double> times;
  std::vector<Vec> x;
  std::vector<Vec> z;
  std::vector<Vec> xhat;
  std::vector<double> err_x;
  std::vector<double> err_z;
};

// Co-simulates plant and observer from (x0, z0); filters see h(x) + noise(t).
// With record = false only err_x / err_z and times are kept.
ObserverRun simulate_observer(const DynamicalSystem& system, const FilterBank& bank, const KklDataset& ds,
                              const Vec& x0, const Vec& z0, double horizon, double dt,
                              const std::function<double(double)>& noise = {}, bool record = true);

struct Stats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

Stats summarize(const std::vector<double>& values);

struct ObserverResult {
  std::string name;
  Stats stats;
  std::vector<double> values;
  // Scenario 1: runs that were still above tolerance at the horizon.
  std::vector<bool> unconverged;
  std::vector<double> conv_time_z;
};

struct BenchReport {
  Scenario scenario = Scenario::InitError;
  std::vector<ObserverResult> observers;
  std::uint64_t seed = 0;
  double tolerance_x = 0.0;
  double error_floor = 0.0;
  Json config;
};

// An observer ready to run: its bank and dataset.
struct PreparedObserver {
  std::string name;
  FilterBank bank;
  std::shared_ptr<const KklDataset> dataset;
};

std::vector<PreparedObserver> load_observers(const ScenarioConfig& cfg);

BenchReport run_scenario1(const ScenarioConfig& cfg);
BenchReport run_scenario1(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers);
BenchReport run_scenario2(const ScenarioConfig& cfg);
BenchReport run_scenario2(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers);

// Largest err_x over noise-free runs started on the dataset (T_lookup(x0)).
double calibrate_error_floor(const ScenarioConfig& cfg, const std::vector<PreparedObserver>& observers);

// Seeded initial states and unit error directions shared by all observers.
struct RunDraw {
  Vec x0;
  Vec u;
};
std::vector<RunDraw> draw_runs(const ScenarioConfig& cfg, int filter_dim);

// CSV columns t, x1..xn, z1..zm, xhat1..xhatn, err_x, err_z.
void emit_run_series(const ObserverRun& run, const std::string& path);
ObserverRun read_run_series(const std::string& path);

struct Table {
  std::string text;
  Json json;
};

Table aggregate_table(const BenchReport& convergence, const BenchReport& noise);

Json report_to_json(const BenchReport& report);
BenchReport report_from_json(const Json& j);

// Whole-experiment document used by the CLI `run` command.
struct ExperimentConfig {
  ScenarioConfig scenario1;
  ScenarioConfig scenario2;
  int dataset_grid = 200;
  // Unset: grid the measured invariant box of x0_box (inflated by 5%).
  std::optional<Box> dataset_box;
  double invariance_horizon = 50.0;
  int invariance_grid = 41;
  std::uint64_t series_seed = 0;
};

ExperimentConfig experiment_from_json(const Json& j);

// Box over which datasets are gridded for this experiment.
Box dataset_box(const ExperimentConfig& cfg, const DynamicalSystem& system);

// Loads every observer's dataset. Missing or stale ones (other grid or bank)
// are generated and written to their dataset path, or to
// `dataset_dir/<name>.csv` when the observer names none.
std::vector<PreparedObserver> prepare_observers(const ExperimentConfig& cfg, const std::string& dataset_dir,
                                                std::ostream* log = nullptr);

}  // namespace kkl
