#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kkl {

using ScalarField2 = std::function<double(double z, double y)>;
using ZPartial = std::function<double(int order, double z, double y)>;

// Scalar contraction sigma(z, y) with -beta <= d sigma/dz <= -alpha < 0 and
// |d sigma/dy| >= gamma. `kind` and `params` describe a built-in for
// serialization; hand-made maps use kind "custom".
struct ContractionMap {
  std::string kind = "custom";
  std::vector<double> params;
  ScalarField2 sigma;
  ScalarField2 dsigma_dz;
  ScalarField2 dsigma_dy;
  ZPartial z_partial;  // order 0 is sigma itself
  double declared_alpha = 0.0;
  double declared_beta = 0.0;
  double declared_gamma = 0.0;
};

// sigma(z, y) = a (z - y), a < 0.
ContractionMap builtin_linear(double a);

// sigma(z, y) = a_fast (z - y) + (a_slow - a_fast) tanh(z - y), a_fast < a_slow < 0.
ContractionMap builtin_tanh_blend(double a_fast, double a_slow);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BoundsReport {
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double gamma_hat = 0.0;
  bool pass = false;
  std::size_t sample_count = 0;
};

BoundsReport estimate_bounds(const ContractionMap& cm, Interval z_range, Interval y_range, int grid_z,
                             int grid_y);

inline constexpr double kPsiTolerance = 1e-12;

// Unique root of z -> sigma(z, y). The bracket search starts at `start`
// (default y) and expands outward; Newton steps are safeguarded by bisection.
double solve_psi(const ContractionMap& cm, double y, double tol = kPsiTolerance,
                 std::optional<double> start = std::nullopt);

// 1 / (d sigma/dz)(psi(y), y).
double kappa(const ContractionMap& cm, double y);

// Coefficients (ascending powers of t) of P_j with d^j/du^j tanh(u) = P_j(tanh u).
std::vector<double> tanh_derivative_poly(int order);

}  // namespace kkl
