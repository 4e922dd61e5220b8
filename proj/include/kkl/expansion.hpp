#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kkl/contraction.hpp"
#include "kkl/dynsys.hpp"

namespace kkl {

// Ordered tuples (l_1, ..., l_j), each in [1, l-1], summing to l; lexicographic.
std::vector<std::vector<int>> compositions(int l, int j);

// Polynomial in mu = 1/lambda. Coefficient i multiplies mu^i.
class InversePowerSeries {
 public:
  InversePowerSeries() = default;
  explicit InversePowerSeries(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}

  const std::vector<double>& coeffs() const { return coeffs_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  // Product keeping only powers 0..max_power.
  InversePowerSeries times(const InversePowerSeries& other, int max_power) const;
  // p^exponent keeping only powers 0..max_power.
  InversePowerSeries power(int exponent, int max_power) const;
  double at_lambda(double lambda) const;

 private:
  std::vector<double> coeffs_;
};

// Data of the phi_l recursion: plant, contraction and expansion order m.
struct PhiFamily {
  DynamicalSystem system;
  ContractionMap cm;
  int m = 1;
  StencilOptions stencil;
};

// Values of phi_0..phi_{levels-1} along a flow window centred on x, plus their
// stencil derivatives. All lambda-dependent quantities are built from these.
class PhiWindow {
 public:
  // Holds phi up to `levels - 1` and L_f phi up to `derivative_levels - 1`.
  PhiWindow(const PhiFamily& fam, const Vec& x, int levels, int derivative_levels);

  int levels() const { return static_cast<int>(phi_.size()); }
  double y() const { return y_[static_cast<std::size_t>(half_width_)]; }
  double psi() const { return psi_[static_cast<std::size_t>(half_width_)]; }
  // phi_l at the window centre.
  double phi(int l) const;
  // L_f phi_l at the window centre.
  double lf_phi(int l) const;
  // sum_{l < terms} phi_l / lambda^l at the centre, and its Lie derivative.
  double ta(double lambda, int terms) const;
  double lf_ta(double lambda, int terms) const;
  // d^j sigma / dz^j at (psi(h(x)), h(x)).
  double sigma_derivative(int j) const;

 private:
  const PhiFamily* fam_;
  int half_width_ = 0;
  double spacing_ = 0.0;
  std::vector<double> y_;
  std::vector<double> psi_;
  // phi_[l] is centred and has half-width half_width_ - 4 l.
  std::vector<std::vector<double>> phi_;
};

double eval_phi(const PhiFamily& fam, const Vec& x, int l);
double eval_Ta(const PhiFamily& fam, const Vec& x, double lambda);

struct ExpansionEval {
  Vec lambdas;
  double k = 1.0;
  Eigen::MatrixXd V;
  Eigen::MatrixXd K;
  double cond_V = 0.0;

  int m() const { return static_cast<int>(lambdas.size()); }
};

// V(i, j) = lambda_i^{-j}, K = diag(1, k, ..., k^{m-1}).
ExpansionEval vandermonde(const Vec& lambdas, double k = 1.0);

// V K^{-1} (phi_0, ..., phi_{m-1})(x).
Vec eval_bold_Ta(const PhiFamily& fam, const ExpansionEval& ev, const Vec& x);

// (L_f T_a - lambda sigma(T_a, h)) / lambda at x.
double residual_omega(const PhiFamily& fam, const Vec& x, double lambda);

struct NumericTOptions {
  // 0 selects 30 / (alpha lambda).
  double washout = 0.0;
  double dt = 1e-3;
  // Backward leg must stay inside this box inflated by 10%.
  std::optional<Box> domain;
};

// Bounded filter solution at time 0, obtained by running the plant backward
// for the washout time and the scalar filter z' = lambda sigma(z, y) forward
// from psi(y) at the start.
double numeric_T(const PhiFamily& fam, const Vec& x, double lambda, const NumericTOptions& options = {});

// |L_f T_a - lambda sum_j sigma^(j)/j! [p^j]_{<=m-1} - L_f phi_{m-1} / lambda^{m-1}|.
double verify_lemma_lfTa(const PhiFamily& fam, const Vec& x, double lambda);

enum class ScalingQuantity { Omega, R, RLipschitz };

std::string to_string(ScalingQuantity q);
ScalingQuantity scaling_quantity_from_string(const std::string& name);

struct ScalingOptions {
  NumericTOptions numeric;
  // Norms below 10x this floor are treated as numerical noise.
  double error_floor = 1e-12;
  double slope_band = 0.3;
};

struct ScalingReport {
  ScalingQuantity quantity = ScalingQuantity::Omega;
  std::vector<double> lambdas_tested;
  std::vector<double> norms;
  double fitted_slope = 0.0;
  double target_slope = 0.0;
  bool pass = false;
  // Smallest lambda from which a window of >= 4 consecutive lambdas passes.
  std::optional<double> lambda_floor;
};

// For RLipschitz, consecutive samples (x_0, x_1), (x_2, x_3), ... form pairs.
ScalingReport scaling_study(const PhiFamily& fam, ScalingQuantity quantity, const std::vector<Vec>& x_samples,
                            const std::vector<double>& lambdas, const ScalingOptions& options = {});

}  // namespace kkl
