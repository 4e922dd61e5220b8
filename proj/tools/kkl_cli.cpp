// Command line front end: dataset generation, numeric checks, scaling
// studies and the two observer benchmarks.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kkl/config.hpp"
#include "kkl/error.hpp"
#include "kkl/expansion.hpp"
#include "kkl/experiments.hpp"
#include "kkl/kklmap.hpp"
#include "kkl/rng.hpp"

namespace fs = std::filesystem;
using namespace kkl;

namespace {

Box json_box_or(const Json& j, const char* key, const Box& fallback) {
  if (j.contains(key) && j.at(key).is_object()) return box_from_json(j.at(key));
  return fallback;
}

Box default_x0_box() { return Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0)); }

int cmd_gen_dataset(const std::string& config_path, const std::string& out) {
  const Json cfg = read_json_file(config_path);
  const DynamicalSystem system = make_plant(cfg.value("plant", std::string("duffing")));
  if (!cfg.contains("bank")) throw Error(ErrorKind::ConfigError, "dataset config needs a 'bank'");
  const FilterBank bank = bank_from_json(cfg.at("bank"));
  const int grid = cfg.value("grid", 200);
  const double dt = cfg.value("dt", 1e-3);

  Box box;
  if (cfg.contains("box") && cfg.at("box").is_object()) {
    box = box_from_json(cfg.at("box"));
  } else {
    const Box x0 = json_box_or(cfg, "x0_box", default_x0_box());
    const InvarianceReport inv = check_forward_invariance(system, x0, x0, cfg.value("invariance_horizon", 50.0),
                                                          cfg.value("invariance_grid", 41), dt);
    box = inv.visited.inflated(0.05);
  }
  GenerateOptions opts;
  opts.z_init = cfg.value("z_init", 0.0);
  std::cerr << "gridding [" << box.lo.transpose() << "] .. [" << box.hi.transpose() << "], " << grid
            << " per axis, washout " << washout_time(bank) << "\n";
  const KklDataset ds = generate_dataset(system, bank, box, grid, dt, opts);
  const auto parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_dataset(ds, out);
  std::cerr << "wrote " << ds.size() << " pairs to " << out << " (skipped " << ds.meta().skipped << ")\n";
  return 0;
}

std::vector<Vec> sample_points(const Box& box, int count, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<Vec> xs;
  for (int s = 0; s < count; ++s) {
    Vec x(box.dim());
    for (int i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    xs.push_back(std::move(x));
  }
  return xs;
}

int cmd_verify(const std::string& config_path) {
  const Json cfg = read_json_file(config_path);
  const DynamicalSystem system = make_plant(cfg.value("plant", std::string("duffing")));
  const ContractionMap cm = sigma_from_json(cfg.at("sigma"));
  const int m_max = cfg.value("m", 2);
  const auto lambdas = cfg.value("lambdas", std::vector<double>{10.0, 40.0});
  const Box x_box = json_box_or(cfg, "x_box", default_x0_box());
  const int samples = cfg.value("samples", 20);
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{11});
  Json report = Json::object();
  bool ok = true;

  const Json b = cfg.value("bounds", Json::object());
  const auto zr = b.value("z_range", std::vector<double>{-10.0, 10.0});
  const auto yr = b.value("y_range", std::vector<double>{-3.0, 3.0});
  const int grid = b.value("grid", 201);
  const BoundsReport bounds = estimate_bounds(cm, {zr.at(0), zr.at(1)}, {yr.at(0), yr.at(1)}, grid, grid);
  report["bounds"] = {{"alpha_hat", bounds.alpha_hat},
                      {"beta_hat", bounds.beta_hat},
                      {"gamma_hat", bounds.gamma_hat},
                      {"samples", bounds.sample_count},
                      {"pass", bounds.pass}};
  ok = ok && bounds.pass;

  Xoshiro256 rng(seed);
  double psi_worst = 0.0, kappa_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double y = rng.uniform(yr.at(0), yr.at(1));
    const double psi = solve_psi(cm, y);
    psi_worst = std::max(psi_worst, std::abs(cm.sigma(psi, y)));
    kappa_worst = std::max(kappa_worst, std::abs(kappa(cm, y) * cm.dsigma_dz(psi, y) - 1.0));
  }
  report["psi"] = {{"max_residual", psi_worst}, {"kappa_identity", kappa_worst},
                   {"pass", psi_worst < 1e-10 && kappa_worst < 1e-12}};
  ok = ok && psi_worst < 1e-10 && kappa_worst < 1e-12;

  const auto xs = sample_points(x_box, samples, seed);
  Json lemma = Json::array();
  for (int m = 1; m <= m_max; ++m) {
    const PhiFamily fam{system, cm, m, {}};
    for (double lambda : lambdas) {
      double worst = 0.0;
      for (const auto& x : xs) worst = std::max(worst, verify_lemma_lfTa(fam, x, lambda));
      lemma.push_back({{"m", m}, {"lambda", lambda}, {"max_residual", worst}, {"pass", worst < 1e-5}});
      ok = ok && worst < 1e-5;
    }
  }
  report["lemma"] = lemma;

  const auto bank_lambdas = cfg.value("bank_lambdas", std::vector<double>{2.0, 4.0, 6.0});
  const double k = cfg.value("k", 1.0);
  Vec bl(static_cast<Eigen::Index>(bank_lambdas.size()));
  for (std::size_t i = 0; i < bank_lambdas.size(); ++i) bl[static_cast<Eigen::Index>(i)] = bank_lambdas[i];
  const ExpansionEval ev = vandermonde(bl, k);
  const PhiFamily fam{system, cm, ev.m(), {}};
  double two_path = 0.0;
  for (const auto& x : xs) {
    const Vec bold = eval_bold_Ta(fam, ev, x);
    for (int i = 0; i < ev.m(); ++i) two_path = std::max(two_path, std::abs(bold[i] - eval_Ta(fam, x, k * bl[i])));
  }
  const double inv_err =
      (ev.V * ev.V.inverse() - Eigen::MatrixXd::Identity(ev.m(), ev.m())).norm();
  report["vandermonde"] = {{"cond", ev.cond_V},
                           {"inverse_error", inv_err},
                           {"two_path", two_path},
                           {"pass", two_path < 1e-12 && inv_err < ev.cond_V * 1e-14}};
  ok = ok && two_path < 1e-12 && inv_err < ev.cond_V * 1e-14;
  report["pass"] = ok;
  std::cout << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

int cmd_scaling(const std::string& quantity, const std::vector<double>& lambdas, int m, const std::string& sigma,
                const std::string& plant, int samples, std::uint64_t seed, const std::string& csv_path,
                const std::string& json_path) {
  const ContractionMap cm = sigma.empty() ? builtin_tanh_blend(-5.0, -0.5) : sigma_from_json(Json::parse(sigma));
  const PhiFamily fam{make_plant(plant), cm, m, {}};
  const ScalingQuantity q = scaling_quantity_from_string(quantity);
  const int count = q == ScalingQuantity::RLipschitz ? 2 * samples : samples;
  const auto xs = sample_points(Box::make(Vec::Constant(2, -1.5), Vec::Constant(2, 1.5)), count, seed);
  const ScalingReport r = scaling_study(fam, q, xs, lambdas);

  std::ofstream csv_file;
  if (!csv_path.empty()) {
    csv_file.open(csv_path);
    if (!csv_file) throw Error(ErrorKind::IoError, "cannot write " + csv_path);
  }
  std::ostream& csv = csv_path.empty() ? std::cout : csv_file;
  csv << "lambda,norm\n";
  char line[96];
  for (std::size_t i = 0; i < r.norms.size(); ++i) {
    std::snprintf(line, sizeof line, "%.16e,%.16e\n", r.lambdas_tested[i], r.norms[i]);
    csv << line;
  }
  Json j = {{"quantity", to_string(r.quantity)},
            {"m", m},
            {"lambdas", r.lambdas_tested},
            {"norms", r.norms},
            {"fitted_slope", r.fitted_slope},
            {"target_slope", r.target_slope},
            {"pass", r.pass}};
  if (r.lambda_floor) j["lambda_floor"] = *r.lambda_floor;
  if (json_path.empty()) std::cerr << j.dump(2) << "\n";
  else write_json_file(json_path, j);
  return r.pass ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = experiment_from_json(read_json_file(config_path));
  fs::create_directories(out);
  write_json_file((fs::path(out) / "config.json").string(), read_json_file(config_path));
  const auto observers = prepare_observers(cfg, (fs::path(out) / "datasets").string(), &std::cerr);

  std::cerr << "scenario 1: " << cfg.scenario1.x0_count << " runs\n";
  const BenchReport s1 = run_scenario1(cfg.scenario1, observers);
  write_json_file((fs::path(out) / "scenario1.json").string(), report_to_json(s1));
  std::cerr << "scenario 2: " << cfg.scenario2.x0_count << " runs\n";
  const BenchReport s2 = run_scenario2(cfg.scenario2, observers);
  write_json_file((fs::path(out) / "scenario2.json").string(), report_to_json(s2));

  // Representative run: the first scenario-1 draw.
  const DynamicalSystem system = make_plant(cfg.scenario1.plant);
  const auto draws = draw_runs(cfg.scenario1, observers.front().bank.size());
  for (const auto& obs : observers) {
    const Vec z0 = T_lookup(*obs.dataset, draws.front().x0).value + cfg.scenario1.init_error_norm * draws.front().u;
    const ObserverRun run = simulate_observer(system, obs.bank, *obs.dataset, draws.front().x0, z0,
                                              cfg.scenario1.horizon, cfg.scenario1.dt);
    emit_run_series(run, (fs::path(out) / ("series_" + obs.name + ".csv")).string());
  }
  const Table table = aggregate_table(s1, s2);
  std::cout << table.text;
  std::cout << "tolerance_x " << s1.tolerance_x << ", series seed " << cfg.series_seed << "\n";
  return 0;
}

int cmd_table(const std::string& in, const std::string& out) {
  const BenchReport s1 = report_from_json(read_json_file((fs::path(in) / "scenario1.json").string()));
  const BenchReport s2 = report_from_json(read_json_file((fs::path(in) / "scenario2.json").string()));
  const Table table = aggregate_table(s1, s2);
  fs::path base(out);
  base.replace_extension();
  if (!base.parent_path().empty()) fs::create_directories(base.parent_path());
  std::ofstream txt(base.string() + ".txt");
  if (!txt) throw Error(ErrorKind::IoError, "cannot write " + base.string() + ".txt");
  txt << table.text;
  write_json_file(base.string() + ".json", table.json);
  std::cout << table.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KKL observer toolkit"};
  app.require_subcommand(1);

  std::string config, out, in;
  auto* gen = app.add_subcommand("gen-dataset", "simulate a (x, T(x)) dataset");
  gen->add_option("--config", config, "dataset JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "CSV path")->required();

  auto* verify = app.add_subcommand("verify", "bounds, psi, L_f T_a identity and Vandermonde checks");
  verify->add_option("--config", config, "verify JSON")->required()->check(CLI::ExistingFile);

  std::string quantity = "omega", sigma, plant = "duffing", csv_path, json_path;
  std::vector<double> lambdas{10, 20, 40, 80};
  int m = 2, samples = 20;
  std::uint64_t seed = 3;
  auto* scaling = app.add_subcommand("scaling", "lambda^-m scaling study");
  scaling->add_option("--quantity", quantity, "omega, R or R_lipschitz")
      ->check(CLI::IsMember({"omega", "R", "R_lipschitz"}));
  scaling->add_option("--lambdas", lambdas, "gains, increasing")->expected(4, 64);
  scaling->add_option("--m", m, "expansion order");
  scaling->add_option("--sigma", sigma, "contraction JSON (default tanh blend -5/-0.5)");
  scaling->add_option("--plant", plant);
  scaling->add_option("--samples", samples, "sample states (pairs for R_lipschitz)");
  scaling->add_option("--seed", seed);
  scaling->add_option("--csv", csv_path, "CSV output (default stdout)");
  scaling->add_option("--json", json_path, "slope JSON (default stderr)");

  auto* run = app.add_subcommand("run", "both benchmark scenarios");
  run->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();

  auto* table = app.add_subcommand("table", "aggregate scenario reports");
  table->add_option("--in", in, "directory written by run")->required()->check(CLI::ExistingDirectory);
  table->add_option("--out", out, "table path; .txt and .json are both written")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_dataset(config, out);
    if (*verify) return cmd_verify(config);
    if (*scaling) return cmd_scaling(quantity, lambdas, m, sigma, plant, samples, seed, csv_path, json_path);
    if (*run) return cmd_run(config, out);
    if (*table) return cmd_table(in, out);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
