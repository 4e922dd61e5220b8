#include "kkl/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kkl/error.hpp"
#include "kkl/filterbank.hpp"
#include "kkl/fit.hpp"

namespace kkl {

std::vector<std::vector<int>> compositions(int l, int j) {
  std::vector<std::vector<int>> out;
  if (l < 1 || j < 1) return out;
  std::vector<int> parts(static_cast<std::size_t>(j), 1);
  // Odometer over [1, l-1]^j, keeping tuples that sum to l.
  if (l - 1 < 1) return out;
  for (;;) {
    int sum = 0;
    for (int p : parts) sum += p;
    if (sum == l) out.push_back(parts);
    int pos = j - 1;
    while (pos >= 0 && parts[static_cast<std::size_t>(pos)] == l - 1) {
      parts[static_cast<std::size_t>(pos)] = 1;
      --pos;
    }
    if (pos < 0) break;
    ++parts[static_cast<std::size_t>(pos)];
  }
  return out;
}

InversePowerSeries InversePowerSeries::times(const InversePowerSeries& other, int max_power) const {
  if (coeffs_.empty() || other.coeffs_.empty() || max_power < 0) return InversePowerSeries{};
  const int deg = std::min(max_power, degree() + other.degree());
  std::vector<double> out(static_cast<std::size_t>(deg + 1), 0.0);
  for (int i = 0; i <= degree() && i <= deg; ++i) {
    for (int k = 0; k <= other.degree() && i + k <= deg; ++k) {
      out[static_cast<std::size_t>(i + k)] += coeffs_[static_cast<std::size_t>(i)] * other.coeffs_[static_cast<std::size_t>(k)];
    }
  }
  return InversePowerSeries(std::move(out));
}

InversePowerSeries InversePowerSeries::power(int exponent, int max_power) const {
  InversePowerSeries acc(std::vector<double>{1.0});
  for (int i = 0; i < exponent; ++i) acc = acc.times(*this, max_power);
  return acc;
}

double InversePowerSeries::at_lambda(double lambda) const {
  const double mu = 1.0 / lambda;
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * mu + *it;
  return acc;
}

namespace {

double factorial(int j) {
  double f = 1.0;
  for (int i = 2; i <= j; ++i) f *= i;
  return f;
}

}  // namespace

PhiWindow::PhiWindow(const PhiFamily& fam, const Vec& x, int levels, int derivative_levels) : fam_(&fam) {
  if (levels < 1) throw Error(ErrorKind::ConfigError, "phi window needs at least one level");
  const int top = std::max(levels - 1, derivative_levels);
  half_width_ = kStencilHalfWidth * top;
  spacing_ = fam.stencil.spacing;
  const FlowSamples samples = sample_flow(fam.system, x, half_width_, fam.stencil);
  const std::size_t width = samples.states.size();
  y_.resize(width);
  psi_.resize(width);
  for (std::size_t i = 0; i < width; ++i) {
    y_[i] = fam.system.output(samples.states[i]);
    psi_[i] = solve_psi(fam.cm, y_[i]);
  }
  y_[static_cast<std::size_t>(half_width_)] = fam.system.output(x);

  phi_.push_back(psi_);
  const int phi_top = std::max(levels, derivative_levels);
  for (int l = 1; l < phi_top; ++l) {
    const std::vector<double> dprev = differentiate(phi_.back(), spacing_);
    // phi_l lives on the shrunken window of dprev.
    std::vector<double> next(dprev.size());
    const int hw = static_cast<int>(dprev.size() / 2);
    for (int k = -hw; k <= hw; ++k) {
      const std::size_t base = static_cast<std::size_t>(half_width_ + k);
      const double yk = y_[base];
      const double pk = psi_[base];
      double bracket = dprev[static_cast<std::size_t>(k + hw)];
      for (int j = 1; j <= l; ++j) {
        double sum = 0.0;
        for (const auto& parts : compositions(l, j)) {
          double prod = 1.0;
          for (int p : parts) {
            const auto& level = phi_[static_cast<std::size_t>(p)];
            prod *= level[level.size() / 2 + static_cast<std::size_t>(k)];
          }
          sum += prod;
        }
        if (sum != 0.0) bracket -= fam.cm.z_partial(j, pk, yk) / factorial(j) * sum;
      }
      next[static_cast<std::size_t>(k + hw)] = bracket / fam.cm.dsigma_dz(pk, yk);
    }
    phi_.push_back(std::move(next));
  }
}

double PhiWindow::phi(int l) const {
  const auto& level = phi_.at(static_cast<std::size_t>(l));
  return level[level.size() / 2];
}

double PhiWindow::lf_phi(int l) const {
  const std::vector<double> d = differentiate(phi_.at(static_cast<std::size_t>(l)), spacing_);
  if (d.empty()) throw Error(ErrorKind::ConfigError, "phi window too narrow for this derivative");
  return d[d.size() / 2];
}

double PhiWindow::ta(double lambda, int terms) const {
  double acc = 0.0;
  for (int l = terms - 1; l >= 0; --l) acc = acc / lambda + phi(l);
  return acc;
}

double PhiWindow::lf_ta(double lambda, int terms) const {
  // Stencil derivative of the node values of T_a on the common window.
  const auto& last = phi_.at(static_cast<std::size_t>(terms - 1));
  const std::size_t width = last.size();
  std::vector<double> values(width, 0.0);
  for (int l = terms - 1; l >= 0; --l) {
    const auto& level = phi_[static_cast<std::size_t>(l)];
    const std::size_t offset = (level.size() - width) / 2;
    for (std::size_t i = 0; i < width; ++i) values[i] = values[i] / lambda + level[offset + i];
  }
  const std::vector<double> d = differentiate(values, spacing_);
  if (d.empty()) throw Error(ErrorKind::ConfigError, "phi window too narrow for L_f T_a");
  return d[d.size() / 2];
}

double PhiWindow::sigma_derivative(int j) const { return fam_->cm.z_partial(j, psi(), y()); }

double eval_phi(const PhiFamily& fam, const Vec& x, int l) {
  if (l < 0 || l > fam.m - 1) throw Error(ErrorKind::ConfigError, "phi index outside [0, m-1]");
  return PhiWindow(fam, x, l + 1, 0).phi(l);
}

double eval_Ta(const PhiFamily& fam, const Vec& x, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::SignError, "lambda must be positive");
  return PhiWindow(fam, x, fam.m, 0).ta(lambda, fam.m);
}

ExpansionEval vandermonde(const Vec& lambdas, double k) {
  const auto m = lambdas.size();
  if (m == 0) throw Error(ErrorKind::ConfigError, "vandermonde needs at least one lambda");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(lambdas[i] > 0.0)) throw Error(ErrorKind::SignError, "lambdas must be positive");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (lambdas[i] == lambdas[j]) throw Error(ErrorKind::DuplicateLambda, "lambdas must be distinct");
    }
  }
  if (!(k > 0.0)) throw Error(ErrorKind::SignError, "k must be positive");
  ExpansionEval ev;
  ev.lambdas = lambdas;
  ev.k = k;
  ev.V.resize(m, m);
  ev.K = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) ev.V(i, j) = std::pow(lambdas[i], -static_cast<double>(j));
    ev.K(i, i) = std::pow(k, static_cast<double>(i));
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(ev.V);
  const auto& s = svd.singularValues();
  ev.cond_V = s(0) / s(s.size() - 1);
  return ev;
}

Vec eval_bold_Ta(const PhiFamily& fam, const ExpansionEval& ev, const Vec& x) {
  if (ev.m() != fam.m) throw Error(ErrorKind::ConfigError, "expansion order differs from the number of lambdas");
  const PhiWindow window(fam, x, fam.m, 0);
  Vec phi(fam.m);
  for (int l = 0; l < fam.m; ++l) phi[l] = window.phi(l);
  return ev.V * ev.K.diagonal().cwiseInverse().asDiagonal() * phi;
}

double residual_omega(const PhiFamily& fam, const Vec& x, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::SignError, "lambda must be positive");
  const PhiWindow window(fam, x, fam.m, fam.m);
  const double ta = window.ta(lambda, fam.m);
  const double lf = window.lf_ta(lambda, fam.m);
  return (lf - lambda * fam.cm.sigma(ta, window.y())) / lambda;
}

double numeric_T(const PhiFamily& fam, const Vec& x, double lambda, const NumericTOptions& options) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::SignError, "lambda must be positive");
  const double washout = options.washout > 0.0 ? options.washout : 30.0 / (fam.cm.declared_alpha * lambda);

  Vec start;
  try {
    const Trajectory back = integrate_flow(fam.system, x, 0.0, -washout, options.dt);
    if (options.domain) {
      const Box allowed = options.domain->inflated(0.1);
      for (const Vec& s : back.states) {
        if (!allowed.contains(s)) throw Error(ErrorKind::BackwardEscape, "backward leg left the inflated domain");
      }
    }
    start = back.states.back();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFinite) throw Error(ErrorKind::BackwardEscape, e.what());
    throw;
  }

  Vec gain(1);
  gain << lambda;
  const FilterBank bank = nonlinear_bank(fam.cm, gain, 1.0);
  std::vector<double> state(static_cast<std::size_t>(fam.system.n + 1));
  std::copy(start.data(), start.data() + start.size(), state.begin());
  state.back() = solve_psi(fam.cm, fam.system.output(start));
  Interconnection link(fam.system, bank);
  link.run(state, -washout, 0.0, options.dt);
  return state.back();
}

double verify_lemma_lfTa(const PhiFamily& fam, const Vec& x, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::SignError, "lambda must be positive");
  const int m = fam.m;
  const PhiWindow window(fam, x, m, m);
  const double lhs = window.lf_ta(lambda, m);

  std::vector<double> coeffs(static_cast<std::size_t>(m), 0.0);
  for (int l = 1; l < m; ++l) coeffs[static_cast<std::size_t>(l)] = window.phi(l);
  const InversePowerSeries p(coeffs);
  double rhs = 0.0;
  for (int j = 1; j <= m - 1; ++j) {
    rhs += window.sigma_derivative(j) / factorial(j) * p.power(j, m - 1).at_lambda(lambda);
  }
  rhs *= lambda;
  rhs += window.lf_phi(m - 1) / std::pow(lambda, m - 1);
  return std::abs(lhs - rhs);
}

std::string to_string(ScalingQuantity q) {
  switch (q) {
    case ScalingQuantity::Omega: return "omega";
    case ScalingQuantity::R: return "R";
    case ScalingQuantity::RLipschitz: return "R_lipschitz";
  }
  return "unknown";
}

ScalingQuantity scaling_quantity_from_string(const std::string& name) {
  if (name == "omega") return ScalingQuantity::Omega;
  if (name == "R") return ScalingQuantity::R;
  if (name == "R_lipschitz" || name == "RLipschitz") return ScalingQuantity::RLipschitz;
  throw Error(ErrorKind::ConfigError, "unknown scaling quantity '" + name + "'");
}

namespace {

double slope_of(const std::vector<double>& lambdas, const std::vector<double>& norms, std::size_t from) {
  std::vector<double> lx, ly;
  for (std::size_t i = from; i < lambdas.size(); ++i) {
    lx.push_back(std::log(lambdas[i]));
    ly.push_back(std::log(norms[i]));
  }
  return fit_line(lx, ly).slope;
}

}  // namespace

ScalingReport scaling_study(const PhiFamily& fam, ScalingQuantity quantity, const std::vector<Vec>& x_samples,
                            const std::vector<double>& lambdas, const ScalingOptions& options) {
  if (lambdas.size() < 4) throw Error(ErrorKind::ConfigError, "scaling study needs at least 4 lambdas");
  if (!std::is_sorted(lambdas.begin(), lambdas.end()) || lambdas.front() <= 0.0) {
    throw Error(ErrorKind::ConfigError, "lambdas must be positive and increasing");
  }
  if (x_samples.empty()) throw Error(ErrorKind::ConfigError, "scaling study needs sample points");
  if (quantity == ScalingQuantity::RLipschitz && x_samples.size() < 2) {
    throw Error(ErrorKind::ConfigError, "Lipschitz study needs sample pairs");
  }

  ScalingReport report;
  report.quantity = quantity;
  report.lambdas_tested = lambdas;
  report.target_slope = -static_cast<double>(fam.m);

  for (double lambda : lambdas) {
    double norm = 0.0;
    switch (quantity) {
      case ScalingQuantity::Omega:
        for (const Vec& x : x_samples) norm = std::max(norm, std::abs(residual_omega(fam, x, lambda)));
        break;
      case ScalingQuantity::R:
        for (const Vec& x : x_samples) {
          norm = std::max(norm, std::abs(numeric_T(fam, x, lambda, options.numeric) - eval_Ta(fam, x, lambda)));
        }
        break;
      case ScalingQuantity::RLipschitz:
        for (std::size_t i = 0; i + 1 < x_samples.size(); i += 2) {
          const Vec& a = x_samples[i];
          const Vec& b = x_samples[i + 1];
          const double ra = numeric_T(fam, a, lambda, options.numeric) - eval_Ta(fam, a, lambda);
          const double rb = numeric_T(fam, b, lambda, options.numeric) - eval_Ta(fam, b, lambda);
          norm = std::max(norm, std::abs(ra - rb) / (a - b).norm());
        }
        break;
    }
    if (norm < 10.0 * options.error_floor) {
      throw Error(ErrorKind::NormUnderflow,
                  "residual norm " + std::to_string(norm) + " at lambda = " + std::to_string(lambda) +
                      " is at the numerical error floor");
    }
    report.norms.push_back(norm);
  }

  auto in_band = [&](double slope) { return std::abs(slope - report.target_slope) <= options.slope_band; };
  report.fitted_slope = slope_of(lambdas, report.norms, 0);
  report.pass = in_band(report.fitted_slope);
  for (std::size_t from = 0; from + 4 <= lambdas.size(); ++from) {
    if (in_band(slope_of(lambdas, report.norms, from))) {
      report.lambda_floor = lambdas[from];
      break;
    }
  }
  return report;
}

}  // namespace kkl
