#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kkl {

// Classical fixed-step Runge-Kutta 4 with caller-owned state. The right-hand
// side is called as rhs(t, y, dy) with spans of the stepper's dimension.
class Rk4 {
 public:
  explicit Rk4(std::size_t dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  std::size_t dim() const { return tmp_.size(); }

  template <class Rhs>
  void step(Rhs&& rhs, double t, std::span<double> y, double h) {
    const std::size_t n = tmp_.size();
    const double half = 0.5 * h;
    rhs(t, std::span<const double>(y), std::span<double>(k1_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + half * k1_[i];
    rhs(t + half, std::span<const double>(tmp_), std::span<double>(k2_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + half * k2_[i];
    rhs(t + half, std::span<const double>(tmp_), std::span<double>(k3_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * k3_[i];
    rhs(t + h, std::span<const double>(tmp_), std::span<double>(k4_));
    const double sixth = h / 6.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += sixth * (k1_[i] + 2.0 * (k2_[i] + k3_[i]) + k4_[i]);
    }
  }

 private:
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

// Splits [t0, t1] into fixed steps of magnitude dt with the last one shortened
// so the final time is hit exactly. Works for t1 < t0.
struct StepPlan {
  double t0 = 0.0;
  double t1 = 0.0;
  double step = 0.0;  // signed
  std::size_t count = 0;

  static StepPlan make(double t0, double t1, double dt);

  double time(std::size_t k) const { return k >= count ? t1 : t0 + static_cast<double>(k) * step; }
  double width(std::size_t k) const { return time(k + 1) - time(k); }
};

}  // namespace kkl
