// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "kkl/error.hpp"
#include "kkl/expansion.hpp"
#include "kkl/experiments.hpp"
#include "kkl/rng.hpp"

using namespace kkl;

namespace {

// dataset_injectivity_margin(min_sep = 0.1) of the 200x200 datasets, frozen
// from the first full run.
constexpr double kMargin200[3] = {0.043002370040644139, 0.0037162942992559379, 0.026364725807841851};

int failures = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class F>
void guarded(int id, const std::string& title, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, title, std::string("threw: ") + e.what());
  }
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

std::vector<Vec> samples(int count, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<Vec> xs;
  for (int i = 0; i < count; ++i) xs.push_back(v2(rng.uniform(-2, 2), rng.uniform(-2, 2)));
  return xs;
}

PhiFamily duffing_family(int m) { return PhiFamily{plants::duffing(), builtin_tanh_blend(-5.0, -0.5), m, {}}; }

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double mean_of(const BenchReport& r, const std::string& name) {
  for (const auto& o : r.observers) {
    if (o.name == name) return o.stats.mean;
  }
  throw Error(ErrorKind::MismatchedObservers, "no observer " + name);
}

std::string scaling_detail(const ScalingReport& r) {
  std::string s = "slope " + fmt(r.fitted_slope, 4) + " (target " + fmt(r.target_slope) + " +/- 0.3), norms";
  for (double n : r.norms) s += " " + fmt(n);
  if (r.lambda_floor) s += ", lambda floor " + fmt(*r.lambda_floor);
  return s;
}

bool within_factor(double value, double target, double factor) {
  return value >= target / factor && value <= target * factor;
}

}  // namespace

int main(int argc, char** argv) {
  std::string work = "acceptance_work";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--work") work = argv[i + 1];
  }
  std::filesystem::create_directories(work);
  const auto started = std::chrono::steady_clock::now();
  const DynamicalSystem duff = plants::duffing();

  // Criteria 1, 2 and the 200x200 half of 7 share the full-size datasets.
  const ExperimentConfig full = experiment_from_json(read_json_file(KKL_SOURCE_DIR "/configs/full.json"));
  std::vector<PreparedObserver> observers;
  guarded(1, "benchmark orderings", [&] {
    observers = prepare_observers(full, (std::filesystem::path(work) / "datasets").string(), &std::cerr);
    const BenchReport s1 = run_scenario1(full.scenario1, observers);
    const BenchReport s2 = run_scenario2(full.scenario2, observers);
    write_json_file((std::filesystem::path(work) / "scenario1.json").string(), report_to_json(s1));
    write_json_file((std::filesystem::path(work) / "scenario2.json").string(), report_to_json(s2));
    std::cout << aggregate_table(s1, s2).text;

    const double cf = mean_of(s1, "fast"), cs = mean_of(s1, "slow"), cn = mean_of(s1, "nonlinear");
    const double gf = mean_of(s2, "fast"), gs = mean_of(s2, "slow"), gn = mean_of(s2, "nonlinear");
    report(1, cf < cn && cn < cs && gs < gn && gn < gf, "benchmark orderings",
           "conv fast " + fmt(cf) + " < nonlinear " + fmt(cn) + " < slow " + fmt(cs) + "; gain slow " + fmt(gs) +
               " < nonlinear " + fmt(gn) + " < fast " + fmt(gf) + " (tol_x " + fmt(s1.tolerance_x) + ")");

    const double targets[6] = {0.83, 6.79, 2.27, 7.57, 1.15, 1.95};
    const double values[6] = {cf, cs, cn, gf, gs, gn};
    const char* labels[6] = {"conv fast", "conv slow", "conv nonlinear", "gain fast", "gain slow", "gain nonlinear"};
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 6; ++i) {
      ok = ok && within_factor(values[i], targets[i], 2.0);
      detail += std::string(i ? ", " : "") + labels[i] + " " + fmt(values[i]) + "/" + fmt(targets[i]);
    }
    report(2, ok, "benchmark magnitudes within 2x", detail);
  });
  if (observers.empty()) report(2, false, "benchmark magnitudes within 2x", "datasets unavailable");

  guarded(3, "omega scaling", [&] {
    const ScalingReport r = scaling_study(duffing_family(2), ScalingQuantity::Omega, samples(20, 3), {10, 20, 40, 80});
    report(3, r.pass && std::abs(r.fitted_slope + 2.0) <= 0.3, "omega scaling", scaling_detail(r));
  });

  guarded(4, "R scaling", [&] {
    const PhiFamily fam = duffing_family(2);
    const ScalingReport r = scaling_study(fam, ScalingQuantity::R, samples(20, 3), {10, 20, 40, 80});
    const ScalingReport lip = scaling_study(fam, ScalingQuantity::RLipschitz, samples(40, 3), {10, 20, 40, 80});
    bool lip_ok = lip.lambda_floor.has_value();
    if (lip_ok) {
      // Refit from the reported floor onward.
      std::vector<double> from_floor;
      for (double l : lip.lambdas_tested) {
        if (l >= *lip.lambda_floor) from_floor.push_back(l);
      }
      const ScalingReport refit = scaling_study(fam, ScalingQuantity::RLipschitz, samples(40, 3), from_floor);
      lip_ok = refit.pass;
    }
    report(4, r.pass && lip_ok, "R scaling", "R " + scaling_detail(r) + "; Lipschitz " + scaling_detail(lip));
  });

  guarded(5, "L_f T_a identity", [&] {
    double worst = 0;
    for (int m : {1, 2}) {
      for (double l : {10.0, 40.0}) {
        for (const Vec& x : samples(20, 4)) worst = std::max(worst, verify_lemma_lfTa(duffing_family(m), x, l));
      }
    }
    report(5, worst < 1e-5, "L_f T_a identity", "max residual " + fmt(worst) + " (< 1e-5)");
  });

  guarded(6, "contraction rates", [&] {
    const Vec lambdas = Vec::LinSpaced(3, 2.0, 6.0);
    const std::pair<std::string, FilterBank> banks[3] = {
        {"fast", linear_bank_from(-5.0, lambdas)},
        {"slow", linear_bank_from(-0.5, lambdas)},
        {"nonlinear", nonlinear_bank(builtin_tanh_blend(-5.0, -0.5), lambdas, 1.0)}};
    bool ok = true;
    std::string detail;
    for (const auto& [name, bank] : banks) {
      double lo = INFINITY, hi = -INFINITY;
      for (const Vec& x0 : samples(5, 6)) {
        auto traj = std::make_shared<const Trajectory>(integrate_flow(duff, x0, 0.0, 40.0, 1e-3));
        const RateReport r = contraction_rate_check(bank, OutputSignal::from_trajectory(traj), Vec::Constant(3, 0.5),
                                                    Vec::Zero(3), 40.0, 1e-3);
        ok = ok && r.pass && r.within_bounds;
        lo = std::min(lo, r.fitted_rate);
        hi = std::max(hi, r.fitted_rate);
      }
      detail += (detail.empty() ? "" : "; ") + name + " fitted [" + fmt(lo) + ", " + fmt(hi) + "] in [" +
                fmt(-bank.fast_rate()) + ", " + fmt(-bank.slow_rate()) + "]";
    }
    report(6, ok, "contraction rates", detail);
  });

  guarded(7, "injectivity margins", [&] {
    const Box box = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    const auto grid = box.grid(50);
    PointSet dom(2, static_cast<Eigen::Index>(grid.size())), img(2, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      dom.col(static_cast<Eigen::Index>(i)) = grid[i];
      img.col(static_cast<Eigen::Index>(i)) = lie_derivatives(duff, grid[i], 2);
    }
    const double h2 = injectivity_margin(dom, img, 0.1);
    bool ok = std::abs(h2 - 1.0) < 1e-9;
    std::string detail = "H2 margin " + fmt(h2, 12);
    if (observers.size() != 3) throw Error(ErrorKind::ConfigError, "full-size datasets unavailable");
    for (std::size_t i = 0; i < 3; ++i) {
      const double margin = dataset_injectivity_margin(*observers[i].dataset, 0.1);
      ok = ok && margin > 0.0 && std::abs(margin - kMargin200[i]) <= 1e-9 * kMargin200[i];
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", margin);
      detail += ", " + observers[i].name + " " + buf;
    }
    report(7, ok, "injectivity margins", detail);
  });

  guarded(8, "numerical-core oracles", [&] {
    double lie = 0;
    for (const Vec& x : Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0)).grid(20)) {
      const Vec num = lie_derivatives(duff, x, 3);
      const Vec sym = plants::duffing_lie_symbolic(x);
      for (int i = 0; i < 3; ++i) lie = std::max(lie, std::abs(num[i] - sym[i]) / std::max(1.0, std::abs(sym[i])));
    }
    double psi = 0;
    Xoshiro256 rng(1000);
    for (const ContractionMap& cm : {builtin_linear(-5.0), builtin_tanh_blend(-5.0, -0.5)}) {
      for (int i = 0; i < 1000; ++i) {
        const double y = rng.uniform(-5.0, 5.0);
        psi = std::max(psi, std::abs(cm.sigma(solve_psi(cm, y), y)));
      }
    }
    const PhiFamily fam = duffing_family(3);
    const ExpansionEval ev = vandermonde(Vec::LinSpaced(3, 2.0, 6.0), 1.0);
    double two_path = 0;
    for (const Vec& x : samples(20, 9)) {
      const Vec t = eval_bold_Ta(fam, ev, x);
      for (int i = 0; i < 3; ++i) two_path = std::max(two_path, std::abs(t[i] - eval_Ta(fam, x, ev.lambdas[i])));
    }
    auto err = [](double dt) {
      return std::abs(flow_to(plants::linear(1, -1.0), Vec::Constant(1, 1.0), 0.0, 1.0, dt)[0] - std::exp(-1.0));
    };
    const double ratio = err(0.1) / err(0.05);
    report(8, lie < 1e-6 && psi < 1e-10 && two_path < 1e-12 && ratio >= 14 && ratio <= 18, "numerical-core oracles",
           "lie rel err " + fmt(lie) + ", psi residual " + fmt(psi) + ", two-path " + fmt(two_path) +
               ", RK4 factor " + fmt(ratio, 4));
  });

  guarded(9, "washout and flow compatibility (50x50)", [&] {
    const Box x0 = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    const Box box = check_forward_invariance(duff, x0, x0, 50.0, 41, 1e-3).visited.inflated(0.05);
    bool ok = true;
    std::string detail;
    for (std::size_t o = 0; o < 3; ++o) {
      const FilterBank bank = bank_from_json(full.scenario1.observers[o].bank);
      const KklDataset ds = generate_dataset(duff, bank, box, 50, 1e-3);
      GenerateOptions shifted_opts;
      shifted_opts.z_init = 10.0;
      const KklDataset shifted = generate_dataset(duff, bank, box, 50, 1e-3, shifted_opts);
      const Vec rates = bank.component_rates();
      const double t_l = washout_time(bank);
      double washout_ratio = 0;
      for (Eigen::Index c = 0; c < ds.zs().cols(); ++c) {
        for (int i = 0; i < bank.size(); ++i) {
          const double bound = 10.0 * std::exp(-rates[i] * t_l) * 1.05;
          washout_ratio = std::max(washout_ratio, std::abs(shifted.zs()(i, c) - ds.zs()(i, c)) / bound);
        }
      }
      double lip = 0;
      for (Eigen::Index a = 0; a < ds.xs().cols(); ++a) {
        for (Eigen::Index b = a + 1; b < ds.xs().cols(); ++b) {
          const double dx = (ds.xs().col(a) - ds.xs().col(b)).norm();
          if (dx >= 0.02 && dx <= 0.5) lip = std::max(lip, (ds.zs().col(a) - ds.zs().col(b)).norm() / dx);
        }
      }
      const double residual = 20.0 * std::exp(-bank.slow_rate() * t_l);
      double flow_ratio = 0;
      Interconnection link(duff, bank);
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ds.size()); c += 25) {
        std::vector<double> s{ds.xs()(0, c), ds.xs()(1, c), ds.zs()(0, c), ds.zs()(1, c), ds.zs()(2, c)};
        link.run(s, 0.0, 1.5, 1e-3);
        const Lookup l = T_lookup(ds, v2(s[0], s[1]));
        const Vec z = Eigen::Map<const Vec>(s.data() + 2, 3);
        flow_ratio = std::max(flow_ratio, (z - l.value).norm() / (lip * l.distance + residual));
      }
      ok = ok && washout_ratio <= 1.0 && flow_ratio <= 1.0;
      detail += (o ? "; " : "") + full.scenario1.observers[o].name + " washout " + fmt(washout_ratio) +
                " of bound, flow " + fmt(flow_ratio) + " of bound";
    }
    report(9, ok, "washout and flow compatibility (50x50)", detail);
  });

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::printf("%d failure(s), %.0f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
