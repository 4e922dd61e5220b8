#include "kkl/filterbank.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kkl/fit.hpp"

namespace kkl {

namespace {

void check_lambdas(const Vec& lambdas) {
  if (lambdas.size() == 0) throw Error(ErrorKind::ConfigError, "filter bank needs at least one gain");
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw Error(ErrorKind::SignError, "filter gains must be positive");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (lambdas[i] == lambdas[j]) throw Error(ErrorKind::DuplicateLambda, "filter gains must be distinct");
    }
  }
}

}  // namespace

FilterBank::FilterBank(LinearFilters filters) {
  if (filters.A.rows() != filters.A.cols() || filters.A.rows() != filters.B.size() || filters.B.size() == 0) {
    throw Error(ErrorKind::ConfigError, "linear bank needs square A matching B");
  }
  size_ = static_cast<int>(filters.B.size());
  const Eigen::MatrixXd sym = 0.5 * (filters.A + filters.A.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  slow_rate_ = -eig.eigenvalues().maxCoeff();
  fast_rate_ = -eig.eigenvalues().minCoeff();
  filters_ = std::move(filters);
}

FilterBank::FilterBank(NonlinearFilters filters) {
  check_lambdas(filters.lambdas);
  if (!(filters.k > 0.0)) throw Error(ErrorKind::SignError, "global gain k must be positive");
  if (static_cast<Eigen::Index>(filters.sigmas.size()) != filters.lambdas.size()) {
    throw Error(ErrorKind::ConfigError, "one contraction per filter gain is required");
  }
  size_ = static_cast<int>(filters.lambdas.size());
  slow_rate_ = std::numeric_limits<double>::infinity();
  fast_rate_ = 0.0;
  for (int i = 0; i < size_; ++i) {
    const double g = filters.k * filters.lambdas[i];
    slow_rate_ = std::min(slow_rate_, g * filters.sigmas[static_cast<std::size_t>(i)].declared_alpha);
    fast_rate_ = std::max(fast_rate_, g * filters.sigmas[static_cast<std::size_t>(i)].declared_beta);
  }
  filters_ = std::move(filters);
}

void FilterBank::rhs(std::span<const double> z, double y, std::span<double> dz) const {
  if (const auto* nl = std::get_if<NonlinearFilters>(&filters_)) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      dz[i] = nl->k * nl->lambdas[static_cast<Eigen::Index>(i)] * nl->sigmas[i].sigma(z[i], y);
    }
    return;
  }
  const auto& lin = std::get<LinearFilters>(filters_);
  const Eigen::Map<const Vec> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Map<Vec> dzv(dz.data(), static_cast<Eigen::Index>(dz.size()));
  dzv.noalias() = lin.A * zv;
  dzv += lin.B * y;
}

Vec FilterBank::gains() const {
  if (const auto* nl = std::get_if<NonlinearFilters>(&filters_)) return nl->k * nl->lambdas;
  const auto& lin = std::get<LinearFilters>(filters_);
  if (lin.lambdas.size() == size_) return lin.lambdas;
  return lin.A.diagonal().cwiseAbs();
}

Vec FilterBank::component_rates() const {
  Vec rates(size_);
  if (const auto* nl = std::get_if<NonlinearFilters>(&filters_)) {
    for (int i = 0; i < size_; ++i) {
      rates[i] = nl->k * nl->lambdas[i] * nl->sigmas[static_cast<std::size_t>(i)].declared_alpha;
    }
    return rates;
  }
  const auto& lin = std::get<LinearFilters>(filters_);
  const bool diagonal = (lin.A - Eigen::MatrixXd(lin.A.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) return -lin.A.diagonal();
  return Vec::Constant(size_, slow_rate_);
}

FilterBank linear_bank_from(double a, const Vec& lambdas) {
  if (!(a < 0.0)) throw Error(ErrorKind::SignError, "linear bank requires a < 0");
  check_lambdas(lambdas);
  LinearFilters lin;
  lin.A = (a * lambdas).asDiagonal();
  lin.B = -a * lambdas;
  lin.a = a;
  lin.lambdas = lambdas;
  return FilterBank(std::move(lin));
}

FilterBank nonlinear_bank(std::vector<ContractionMap> sigmas, const Vec& lambdas, double k) {
  return FilterBank(NonlinearFilters{std::move(sigmas), lambdas, k});
}

FilterBank nonlinear_bank(const ContractionMap& sigma, const Vec& lambdas, double k) {
  return nonlinear_bank(std::vector<ContractionMap>(static_cast<std::size_t>(lambdas.size()), sigma), lambdas, k);
}

OutputSignal OutputSignal::constant(double value) {
  return OutputSignal{[value](double) { return value; }, {}};
}

OutputSignal OutputSignal::closed_form(std::function<double(double)> fn) { return OutputSignal{std::move(fn), {}}; }

OutputSignal OutputSignal::from_trajectory(std::shared_ptr<const Trajectory> traj) {
  return OutputSignal{[traj = std::move(traj)](double t) { return sample_output(*traj, t); }, {}};
}

OutputSignal OutputSignal::with_noise(std::function<double(double)> nu) const {
  OutputSignal out = *this;
  out.noise = std::move(nu);
  return out;
}

namespace {

template <class Visit>
void integrate_filter(const FilterBank& bank, const OutputSignal& signal, std::span<double> z, double t0, double t1,
                      double dt, Visit&& visit) {
  const StepPlan plan = StepPlan::make(t0, t1, dt);
  Rk4 rk(static_cast<std::size_t>(bank.size()));
  auto rhs = [&](double t, std::span<const double> s, std::span<double> ds) { bank.rhs(s, signal(t), ds); };
  for (std::size_t k = 0; k < plan.count; ++k) {
    rk.step(rhs, plan.time(k), z, plan.width(k));
    for (double v : z) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "filter state diverged");
    }
    visit(plan.time(k + 1), std::span<const double>(z));
  }
}

std::span<double> as_span(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

Vec step_filter(const FilterBank& bank, const Vec& z, const OutputSignal& signal, double t, double dt) {
  Vec out = z;
  Rk4 rk(static_cast<std::size_t>(bank.size()));
  rk.step([&](double s, std::span<const double> zz, std::span<double> dz) { bank.rhs(zz, signal(s), dz); }, t,
          as_span(out), dt);
  return out;
}

Trajectory run_filter(const FilterBank& bank, const OutputSignal& signal, const Vec& z0, double t0, double t1,
                      double dt) {
  if (z0.size() != bank.size()) throw Error(ErrorKind::ConfigError, "filter initial state has wrong dimension");
  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(z0);
  traj.outputs.push_back(signal(t0));
  Vec z = z0;
  integrate_filter(bank, signal, as_span(z), t0, t1, dt, [&](double t, std::span<const double> s) {
    traj.times.push_back(t);
    traj.states.emplace_back(Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size())));
    traj.outputs.push_back(signal(t));
  });
  return traj;
}

RateReport contraction_rate_check(const FilterBank& bank, const OutputSignal& signal, const Vec& z0_a,
                                  const Vec& z0_b, double horizon, double dt) {
  if ((z0_a - z0_b).norm() < 1e-12) throw Error(ErrorKind::GapUnderflow, "initial gap below 1e-12");
  const Trajectory a = run_filter(bank, signal, z0_a, 0.0, horizon, dt);
  const Trajectory b = run_filter(bank, signal, z0_b, 0.0, horizon, dt);
  std::vector<double> ts, logs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double gap = (a.states[i] - b.states[i]).norm();
    if (gap >= 1e-8 && gap <= 1e-1) {
      ts.push_back(a.times[i]);
      logs.push_back(std::log(gap));
    }
  }
  if (ts.size() < 3) throw Error(ErrorKind::Degenerate, "gap never spent enough time inside [1e-8, 1e-1]");
  RateReport report;
  report.fitted_rate = fit_line(ts, logs).slope;
  report.bound_rate = bank.slow_rate();
  report.fast_rate = bank.fast_rate();
  report.window_points = ts.size();
  constexpr double slack = 0.05;
  report.pass = report.fitted_rate <= -report.bound_rate * (1.0 - slack);
  report.within_bounds = report.pass && report.fitted_rate >= -report.fast_rate * (1.0 + slack);
  return report;
}

}  // namespace kkl
