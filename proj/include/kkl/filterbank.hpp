#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "kkl/contraction.hpp"
#include "kkl/dynsys.hpp"
#include "kkl/error.hpp"
#include "kkl/rk4.hpp"

namespace kkl {

// z' = A z + B y. `a` and `lambdas` are kept when built by linear_bank_from.
struct LinearFilters {
  Eigen::MatrixXd A;
  Vec B;
  double a = 0.0;
  Vec lambdas;
};

// z_i' = k lambda_i sigma_i(z_i, y).
struct NonlinearFilters {
  std::vector<ContractionMap> sigmas;
  Vec lambdas;
  double k = 1.0;
};

class FilterBank {
 public:
  explicit FilterBank(LinearFilters filters);
  explicit FilterBank(NonlinearFilters filters);

  int size() const { return size_; }
  bool is_linear() const { return std::holds_alternative<LinearFilters>(filters_); }
  const LinearFilters& linear() const { return std::get<LinearFilters>(filters_); }
  const NonlinearFilters& nonlinear() const { return std::get<NonlinearFilters>(filters_); }

  // dz for measured output y.
  void rhs(std::span<const double> z, double y, std::span<double> dz) const;

  // Guaranteed and fastest exponential rates of the gap between two solutions.
  double slow_rate() const { return slow_rate_; }
  double fast_rate() const { return fast_rate_; }

  // Effective per-filter gains (k lambda_i, or lambda_i for linear banks).
  Vec gains() const;

  // Per-component guaranteed contraction rate.
  Vec component_rates() const;

 private:
  std::variant<LinearFilters, NonlinearFilters> filters_;
  int size_ = 0;
  double slow_rate_ = 0.0;
  double fast_rate_ = 0.0;
};

// Diagonal bank z_i' = a lambda_i (z_i - y).
FilterBank linear_bank_from(double a, const Vec& lambdas);
FilterBank nonlinear_bank(std::vector<ContractionMap> sigmas, const Vec& lambdas, double k);
FilterBank nonlinear_bank(const ContractionMap& sigma, const Vec& lambdas, double k);

// Measured output y(t) + noise(t).
struct OutputSignal {
  std::function<double(double)> source;
  std::function<double(double)> noise;

  double operator()(double t) const { return noise ? source(t) + noise(t) : source(t); }

  static OutputSignal constant(double value);
  static OutputSignal closed_form(std::function<double(double)> fn);
  static OutputSignal from_trajectory(std::shared_ptr<const Trajectory> traj);
  OutputSignal with_noise(std::function<double(double)> nu) const;
};

Vec step_filter(const FilterBank& bank, const Vec& z, const OutputSignal& signal, double t, double dt);

// States are z; outputs hold the measured signal at each node.
Trajectory run_filter(const FilterBank& bank, const OutputSignal& signal, const Vec& z0, double t0, double t1,
                      double dt);

struct RateReport {
  double fitted_rate = 0.0;
  double bound_rate = 0.0;  // guaranteed decay rate (positive)
  double fast_rate = 0.0;   // fastest possible decay rate (positive)
  std::size_t window_points = 0;
  bool pass = false;
  // fitted_rate inside [-fast_rate, -bound_rate] with 5% slack on both ends.
  bool within_bounds = false;
};

RateReport contraction_rate_check(const FilterBank& bank, const OutputSignal& signal, const Vec& z0_a,
                                  const Vec& z0_b, double horizon, double dt);

// Plant and filter bank integrated in lockstep with one shared step.
// The stacked state is (x, z); filters see h(x) + noise(t).
class Interconnection {
 public:
  Interconnection(const DynamicalSystem& system, const FilterBank& bank, std::function<double(double)> noise = {})
      : system_(system), bank_(bank), noise_(std::move(noise)), rk_(static_cast<std::size_t>(system.n + bank.size())) {}

  int state_dim() const { return system_.n + bank_.size(); }

  void rhs(double t, std::span<const double> s, std::span<double> ds) const {
    const auto n = static_cast<std::size_t>(system_.n);
    const auto xs = s.first(n);
    system_.f(xs, ds.first(n));
    double y = system_.h(xs);
    if (noise_) y += noise_(t);
    bank_.rhs(s.subspan(n), y, ds.subspan(n));
  }

  // Advances `state` from t0 to t1; visit(t, state) after every step.
  template <class Visit>
  void run(std::span<double> state, double t0, double t1, double dt, Visit&& visit) {
    const StepPlan plan = StepPlan::make(t0, t1, dt);
    auto f = [this](double t, std::span<const double> s, std::span<double> ds) { rhs(t, s, ds); };
    for (std::size_t k = 0; k < plan.count; ++k) {
      rk_.step(f, plan.time(k), state, plan.width(k));
      for (double v : state) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "interconnection diverged");
      }
      visit(plan.time(k + 1), std::span<const double>(state));
    }
  }

  void run(std::span<double> state, double t0, double t1, double dt) {
    run(state, t0, t1, dt, [](double, std::span<const double>) {});
  }

 private:
  const DynamicalSystem& system_;
  const FilterBank& bank_;
  std::function<double(double)> noise_;
  Rk4 rk_;
};

}  // namespace kkl
