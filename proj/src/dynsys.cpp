#include "kkl/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include "kkl/error.hpp"
#include "kkl/rk4.hpp"

namespace kkl {

StepPlan StepPlan::make(double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::ConfigError, "step size must be positive");
  StepPlan plan;
  plan.t0 = t0;
  plan.t1 = t1;
  const double span = std::abs(t1 - t0);
  if (span == 0.0) return plan;
  const double ratio = span / dt;
  // Tolerate round-off so that e.g. 1.0 / 1e-3 gives 1000 steps, not 1001.
  plan.count = static_cast<std::size_t>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
  plan.count = std::max<std::size_t>(plan.count, 1);
  plan.step = (t1 > t0 ? dt : -dt);
  return plan;
}

Vec DynamicalSystem::field(const Vec& x) const {
  Vec dx(n);
  f(std::span<const double>(x.data(), static_cast<std::size_t>(n)),
    std::span<double>(dx.data(), static_cast<std::size_t>(n)));
  return dx;
}

double DynamicalSystem::output(const Vec& x) const {
  return h(std::span<const double>(x.data(), static_cast<std::size_t>(n)));
}

Box Box::make(Vec lo, Vec hi) {
  if (lo.size() != hi.size() || lo.size() == 0) {
    throw Error(ErrorKind::ConfigError, "box bounds must have equal, non-zero dimension");
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw Error(ErrorKind::ConfigError, "box requires lo < hi in every dimension");
  }
  return Box{std::move(lo), std::move(hi)};
}

bool Box::contains(const Vec& x) const {
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

bool Box::contains(const Box& other) const {
  return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
}

Box Box::inflated(double rel) const {
  const Vec pad = rel * (hi - lo);
  return Box{lo - pad, hi + pad};
}

double Box::spacing(int per_dim) const {
  if (per_dim < 2) throw Error(ErrorKind::ConfigError, "grid needs at least 2 points per dimension");
  return (hi - lo).maxCoeff() / static_cast<double>(per_dim - 1);
}

std::vector<Vec> Box::grid(int per_dim) const {
  if (per_dim < 2) throw Error(ErrorKind::ConfigError, "grid needs at least 2 points per dimension");
  const int d = dim();
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(per_dim);
  std::vector<Vec> points;
  points.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t p = 0; p < total; ++p) {
    Vec x(d);
    for (int i = 0; i < d; ++i) {
      const double frac = static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per_dim - 1);
      x[i] = lo[i] + frac * (hi[i] - lo[i]);
    }
    points.push_back(std::move(x));
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < per_dim) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return points;
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

[[noreturn]] void throw_non_finite(double t) {
  std::ostringstream msg;
  msg << "state left the finite range at t = " << t;
  throw Error(ErrorKind::NonFinite, msg.str());
}

// Integrates in place from t0 to t1; `visit(t, x)` sees every accepted node.
template <class Visit>
void integrate_in_place(const DynamicalSystem& system, std::span<double> x, double t0, double t1, double dt,
                        Visit&& visit) {
  const StepPlan plan = StepPlan::make(t0, t1, dt);
  Rk4 rk(static_cast<std::size_t>(system.n));
  auto rhs = [&](double, std::span<const double> y, std::span<double> dy) { system.f(y, dy); };
  for (std::size_t k = 0; k < plan.count; ++k) {
    const double t = plan.time(k);
    rk.step(rhs, t, x, plan.width(k));
    const double tn = plan.time(k + 1);
    if (!all_finite(x)) throw_non_finite(tn);
    visit(tn, std::span<const double>(x));
  }
}

std::span<double> as_span(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

Trajectory integrate_flow(const DynamicalSystem& system, const Vec& x0, double t0, double t1, double dt) {
  if (x0.size() != system.n) throw Error(ErrorKind::ConfigError, "initial state has wrong dimension");
  Trajectory traj;
  const StepPlan plan = StepPlan::make(t0, t1, dt);
  traj.times.reserve(plan.count + 1);
  traj.states.reserve(plan.count + 1);
  traj.outputs.reserve(plan.count + 1);
  traj.times.push_back(t0);
  traj.states.push_back(x0);
  traj.outputs.push_back(system.output(x0));
  Vec x = x0;
  integrate_in_place(system, as_span(x), t0, t1, dt, [&](double t, std::span<const double> state) {
    traj.times.push_back(t);
    traj.states.emplace_back(Eigen::Map<const Vec>(state.data(), static_cast<Eigen::Index>(state.size())));
    traj.outputs.push_back(system.h(state));
  });
  return traj;
}

Vec flow_to(const DynamicalSystem& system, const Vec& x0, double t0, double t1, double dt) {
  Vec x = x0;
  integrate_in_place(system, as_span(x), t0, t1, dt, [](double, std::span<const double>) {});
  return x;
}

double sample_output(const Trajectory& traj, double t) {
  const std::size_t n = traj.size();
  if (n == 0) throw Error(ErrorKind::OutOfRange, "empty trajectory");
  const double first = traj.times.front();
  const double last = traj.times.back();
  const double slack = 1e-12 * std::max({1.0, std::abs(first), std::abs(last)});
  if (t < first - slack || t > last + slack) {
    std::ostringstream msg;
    msg << "t = " << t << " outside [" << first << ", " << last << "]";
    throw Error(ErrorKind::OutOfRange, msg.str());
  }
  if (n == 1) return traj.outputs[0];
  t = std::clamp(t, first, last);
  // Interval [times[k], times[k+1]] containing t.
  const auto it = std::upper_bound(traj.times.begin(), traj.times.end(), t);
  std::size_t k = (it == traj.times.begin()) ? 0 : static_cast<std::size_t>(it - traj.times.begin()) - 1;
  if (k >= n - 1) k = n - 2;
  if (t == traj.times[k]) return traj.outputs[k];
  if (t == traj.times[k + 1]) return traj.outputs[k + 1];
  if (n < 4) {
    const double w = (t - traj.times[k]) / (traj.times[k + 1] - traj.times[k]);
    return (1.0 - w) * traj.outputs[k] + w * traj.outputs[k + 1];
  }
  std::size_t start = (k == 0) ? 0 : k - 1;
  start = std::min(start, n - 4);
  double value = 0.0;
  for (std::size_t i = start; i < start + 4; ++i) {
    double basis = 1.0;
    for (std::size_t j = start; j < start + 4; ++j) {
      if (j != i) basis *= (t - traj.times[j]) / (traj.times[i] - traj.times[j]);
    }
    value += basis * traj.outputs[i];
  }
  return value;
}

FlowSamples sample_flow(const DynamicalSystem& system, const Vec& x, int half_width,
                        const StencilOptions& options) {
  if (!(options.spacing > 0.0) || !(options.integration_dt > 0.0)) {
    throw Error(ErrorKind::ConfigError, "stencil spacing and integration step must be positive");
  }
  FlowSamples samples;
  samples.spacing = options.spacing;
  samples.half_width = half_width;
  samples.states.assign(static_cast<std::size_t>(2 * half_width + 1), x);
  // Equal sub-steps per node keep the forward and backward legs symmetric.
  const double sub = options.spacing / std::ceil(options.spacing / options.integration_dt - 1e-9);
  for (int dir : {1, -1}) {
    Vec state = x;
    for (int k = 1; k <= half_width; ++k) {
      try {
        integrate_in_place(system, as_span(state), 0.0, dir * options.spacing, sub,
                           [](double, std::span<const double>) {});
      } catch (const Error& e) {
        throw Error(ErrorKind::StencilOutOfDomain, std::string("flow stencil left the domain: ") + e.what());
      }
      samples.states[static_cast<std::size_t>(half_width + dir * k)] = state;
    }
  }
  return samples;
}

std::vector<double> differentiate(std::span<const double> values, double spacing) {
  static constexpr double kCoeff[kStencilHalfWidth] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
  const std::size_t w = kStencilHalfWidth;
  if (values.size() < 2 * w + 1) return {};
  std::vector<double> out(values.size() - 2 * w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i + w;
    double acc = 0.0;
    for (std::size_t j = 1; j <= w; ++j) acc += kCoeff[j - 1] * (values[c + j] - values[c - j]);
    out[i] = acc / spacing;
  }
  return out;
}

Vec lie_derivatives(const DynamicalSystem& system, const Vec& x, int order, const StencilOptions& options) {
  if (order < 1) throw Error(ErrorKind::ConfigError, "Lie derivative order must be >= 1");
  const int half_width = kStencilHalfWidth * (order - 1);
  const FlowSamples samples = sample_flow(system, x, half_width, options);
  std::vector<double> level(samples.states.size());
  for (std::size_t i = 0; i < level.size(); ++i) level[i] = system.output(samples.states[i]);
  Vec result(order);
  result[0] = system.output(x);
  for (int j = 1; j < order; ++j) {
    level = differentiate(level, samples.spacing);
    result[j] = level[level.size() / 2];
  }
  return result;
}

InvarianceReport check_forward_invariance(const DynamicalSystem& system, const Box& initial,
                                          const Box& invariant, double horizon, int grid, double dt) {
  InvarianceReport report;
  Vec lo = initial.lo;
  Vec hi = initial.hi;
  bool escaped = false;
  for (const Vec& x0 : initial.grid(grid)) {
    ++report.runs;
    Vec x = x0;
    lo = lo.cwiseMin(x0);
    hi = hi.cwiseMax(x0);
    try {
      integrate_in_place(system, as_span(x), 0.0, horizon, dt, [&](double, std::span<const double> s) {
        for (std::size_t i = 0; i < s.size(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          lo[ii] = std::min(lo[ii], s[i]);
          hi[ii] = std::max(hi[ii], s[i]);
        }
      });
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      escaped = true;
      lo.setConstant(-std::numeric_limits<double>::infinity());
      hi.setConstant(std::numeric_limits<double>::infinity());
    }
  }
  report.visited = Box{lo, hi};
  report.pass = !escaped && invariant.contains(report.visited);
  return report;
}

double injectivity_margin(const PointSet& domain, const PointSet& image, double min_sep) {
  if (!(min_sep > 0.0)) throw Error(ErrorKind::ConfigError, "min_sep must be positive");
  if (domain.cols() != image.cols()) throw Error(ErrorKind::ConfigError, "point/image count mismatch");
  const Eigen::Index count = domain.cols();
  const double sep2 = min_sep * min_sep;
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (Eigen::Index a = 0; a < count; ++a) {
    for (Eigen::Index b = a + 1; b < count; ++b) {
      const double dx2 = (domain.col(a) - domain.col(b)).squaredNorm();
      if (dx2 < sep2) continue;
      any = true;
      const double dg2 = (image.col(a) - image.col(b)).squaredNorm();
      best = std::min(best, dg2 / dx2);
    }
  }
  if (!any) throw Error(ErrorKind::Degenerate, "no pair satisfies the separation floor");
  return std::sqrt(best);
}

namespace plants {

DynamicalSystem duffing() {
  DynamicalSystem s;
  s.name = "duffing";
  s.n = 2;
  s.f = [](std::span<const double> x, std::span<double> dx) {
    dx[0] = x[1];
    dx[1] = -0.2 * x[0] - x[0] * x[0] * x[0];
  };
  s.h = [](std::span<const double> x) { return x[0]; };
  return s;
}

DynamicalSystem zero_field(int n) {
  DynamicalSystem s;
  s.name = "zero";
  s.n = n;
  s.f = [](std::span<const double>, std::span<double> dx) { std::fill(dx.begin(), dx.end(), 0.0); };
  s.h = [](std::span<const double> x) { return x[0]; };
  return s;
}

DynamicalSystem linear(int n, double rate) {
  DynamicalSystem s;
  s.name = "linear";
  s.n = n;
  s.f = [rate](std::span<const double> x, std::span<double> dx) {
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = rate * x[i];
  };
  s.h = [](std::span<const double> x) { return x[0]; };
  return s;
}

Vec duffing_lie_symbolic(const Vec& x) {
  Vec out(3);
  out << x[0], x[1], -0.2 * x[0] - x[0] * x[0] * x[0];
  return out;
}

}  // namespace plants

namespace {

std::map<std::string, PlantFactory, std::less<>>& registry() {
  static std::map<std::string, PlantFactory, std::less<>> plants{{"duffing", [] { return plants::duffing(); }}};
  return plants;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

DynamicalSystem make_plant(std::string_view name) {
  std::lock_guard lock(registry_mutex());
  const auto& plants = registry();
  const auto it = plants.find(name);
  if (it == plants.end()) throw Error(ErrorKind::ConfigError, "unknown plant '" + std::string(name) + "'");
  return it->second();
}

void register_plant(std::string name, PlantFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[std::move(name)] = std::move(factory);
}

}  // namespace kkl
