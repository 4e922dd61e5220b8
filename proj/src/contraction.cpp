#include "kkl/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "kkl/error.hpp"

namespace kkl {

std::vector<double> tanh_derivative_poly(int order) {
  // P_0 = t, P_{j+1}(t) = P_j'(t) (1 - t^2).
  std::vector<double> p{0.0, 1.0};
  for (int j = 0; j < order; ++j) {
    std::vector<double> dp(p.size() > 1 ? p.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) dp[i - 1] = static_cast<double>(i) * p[i];
    std::vector<double> next(dp.size() + 2, 0.0);
    for (std::size_t i = 0; i < dp.size(); ++i) {
      next[i] += dp[i];
      next[i + 2] -= dp[i];
    }
    p = std::move(next);
  }
  return p;
}

namespace {

double horner(const std::vector<double>& coeffs, double t) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
  return acc;
}

}  // namespace

ContractionMap builtin_linear(double a) {
  if (!(a < 0.0)) throw Error(ErrorKind::SignError, "linear contraction requires a < 0");
  ContractionMap cm;
  cm.kind = "linear";
  cm.params = {a};
  cm.sigma = [a](double z, double y) { return a * (z - y); };
  cm.dsigma_dz = [a](double, double) { return a; };
  cm.dsigma_dy = [a](double, double) { return -a; };
  cm.z_partial = [a](int order, double z, double y) {
    if (order == 0) return a * (z - y);
    return order == 1 ? a : 0.0;
  };
  cm.declared_alpha = -a;
  cm.declared_beta = -a;
  cm.declared_gamma = -a;
  return cm;
}

ContractionMap builtin_tanh_blend(double a_fast, double a_slow) {
  if (!(a_fast < a_slow && a_slow < 0.0)) {
    throw Error(ErrorKind::SignError, "tanh blend requires a_fast < a_slow < 0");
  }
  const double c = a_slow - a_fast;
  // Polynomials for the first few orders are built once; higher orders on demand.
  auto polys = std::make_shared<std::vector<std::vector<double>>>();
  for (int j = 0; j <= 8; ++j) polys->push_back(tanh_derivative_poly(j));

  ContractionMap cm;
  cm.kind = "tanh_blend";
  cm.params = {a_fast, a_slow};
  cm.sigma = [a_fast, c](double z, double y) {
    const double d = z - y;
    return a_fast * d + c * std::tanh(d);
  };
  cm.dsigma_dz = [a_fast, c](double z, double y) {
    const double t = std::tanh(z - y);
    return a_fast + c * (1.0 - t * t);
  };
  cm.dsigma_dy = [a_fast, c](double z, double y) {
    const double t = std::tanh(z - y);
    return -(a_fast + c * (1.0 - t * t));
  };
  cm.z_partial = [a_fast, c, polys](int order, double z, double y) {
    const double d = z - y;
    if (order == 0) return a_fast * d + c * std::tanh(d);
    const double t = std::tanh(d);
    const double tail = c * (static_cast<std::size_t>(order) < polys->size()
                                 ? horner((*polys)[static_cast<std::size_t>(order)], t)
                                 : horner(tanh_derivative_poly(order), t));
    return order == 1 ? a_fast + tail : tail;
  };
  cm.declared_alpha = -a_slow;
  cm.declared_beta = -a_fast;
  cm.declared_gamma = -a_slow;
  return cm;
}

BoundsReport estimate_bounds(const ContractionMap& cm, Interval z_range, Interval y_range, int grid_z,
                             int grid_y) {
  if (grid_z < 2 || grid_y < 2) throw Error(ErrorKind::ConfigError, "bounds grid needs >= 2 points per axis");
  double slope_max = -std::numeric_limits<double>::infinity();
  double slope_min = std::numeric_limits<double>::infinity();
  double gamma_min = std::numeric_limits<double>::infinity();
  BoundsReport report;
  for (int i = 0; i < grid_z; ++i) {
    const double z = z_range.lo + (z_range.hi - z_range.lo) * i / (grid_z - 1);
    for (int j = 0; j < grid_y; ++j) {
      const double y = y_range.lo + (y_range.hi - y_range.lo) * j / (grid_y - 1);
      const double dz = cm.dsigma_dz(z, y);
      slope_max = std::max(slope_max, dz);
      slope_min = std::min(slope_min, dz);
      gamma_min = std::min(gamma_min, std::abs(cm.dsigma_dy(z, y)));
      ++report.sample_count;
    }
  }
  report.alpha_hat = -slope_max;
  report.beta_hat = -slope_min;
  report.gamma_hat = gamma_min;
  constexpr double rel = 1e-6;
  report.pass = slope_max < 0.0 && report.alpha_hat >= cm.declared_alpha * (1.0 - rel) &&
                report.beta_hat <= cm.declared_beta * (1.0 + rel) &&
                report.gamma_hat >= cm.declared_gamma * (1.0 - rel);
  return report;
}

double solve_psi(const ContractionMap& cm, double y, double tol, std::optional<double> start) {
  if (!(tol > 0.0)) throw Error(ErrorKind::ConfigError, "psi tolerance must be positive");
  const double z0 = start.value_or(y);
  const double f0 = cm.sigma(z0, y);
  if (!std::isfinite(f0)) throw Error(ErrorKind::BracketFailure, "sigma is not finite at the start point");
  if (std::abs(f0) <= tol) return z0;

  // sigma decreases in z: a positive value means the root lies above.
  const double dir = f0 > 0.0 ? 1.0 : -1.0;
  const double limit = 1e6 / std::max(cm.declared_alpha, std::numeric_limits<double>::min());
  double inner = z0;
  double step = 1.0;
  double outer = z0 + dir * step;
  double f_outer = cm.sigma(outer, y);
  while (!(f_outer * f0 <= 0.0)) {
    if (!std::isfinite(f_outer) || step > limit) {
      throw Error(ErrorKind::BracketFailure, "no sign change found for sigma(., y)");
    }
    inner = outer;
    step *= 2.0;
    outer = z0 + dir * step;
    f_outer = cm.sigma(outer, y);
  }
  if (std::abs(f_outer) <= tol) return outer;

  // lo has sigma > 0, hi has sigma < 0.
  double lo = dir > 0 ? inner : outer;
  double hi = dir > 0 ? outer : inner;
  double z = 0.5 * (lo + hi);
  double best = z;
  double best_abs = std::numeric_limits<double>::infinity();
  constexpr int kNewtonCap = 50;
  for (int iter = 0; iter < 4000; ++iter) {
    const double fz = cm.sigma(z, y);
    if (std::abs(fz) < best_abs) {
      best_abs = std::abs(fz);
      best = z;
    }
    if (std::abs(fz) <= tol) return z;
    if (fz > 0.0) {
      lo = z;
    } else {
      hi = z;
    }
    double next = 0.5 * (lo + hi);
    if (iter < kNewtonCap) {
      const double slope = cm.dsigma_dz(z, y);
      const double newton = z - fz / slope;
      if (std::isfinite(newton) && newton > lo && newton < hi) next = newton;
    }
    if (next == z || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(z))) {
      // Bracket collapsed to adjacent doubles; the residual cannot improve.
      return best;
    }
    z = next;
  }
  return best;
}

double kappa(const ContractionMap& cm, double y) {
  const double psi = solve_psi(cm, y);
  return 1.0 / cm.dsigma_dz(psi, y);
}

}  // namespace kkl
