#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kkl {

using Vec = Eigen::VectorXd;
// Points stored column-wise: column j is the j-th point.
using PointSet = Eigen::MatrixXd;

using VectorField = std::function<void(std::span<const double> x, std::span<double> dx)>;
using OutputMap = std::function<double(std::span<const double> x)>;

// Autonomous plant x' = f(x), y = h(x) with scalar output.
struct DynamicalSystem {
  std::string name;
  int n = 0;
  VectorField f;
  OutputMap h;

  Vec field(const Vec& x) const;
  double output(const Vec& x) const;
};

struct Box {
  Vec lo;
  Vec hi;

  // Throws ConfigError unless lo < hi componentwise.
  static Box make(Vec lo, Vec hi);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x) const;
  bool contains(const Box& other) const;
  // Grows every side by rel * width.
  Box inflated(double rel) const;
  Vec center() const { return 0.5 * (lo + hi); }
  // Largest grid step over dimensions for `per_dim` points per axis.
  double spacing(int per_dim) const;
  // Tensor grid, first dimension varying slowest; endpoints included.
  std::vector<Vec> grid(int per_dim) const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> outputs;

  std::size_t size() const { return times.size(); }
};

Trajectory integrate_flow(const DynamicalSystem& system, const Vec& x0, double t0, double t1, double dt);

// Endpoint of the flow without storing the path.
Vec flow_to(const DynamicalSystem& system, const Vec& x0, double t0, double t1, double dt);

// Piecewise-cubic (4-node Lagrange) interpolation of the stored outputs.
double sample_output(const Trajectory& traj, double t);

struct StencilOptions {
  double spacing = 1e-2;
  double integration_dt = 1e-3;
};

// Half-width of the central first-derivative stencil (8th order, 9 points).
inline constexpr int kStencilHalfWidth = 4;

// States X(x, k * spacing) for k in [-half_width, half_width].
struct FlowSamples {
  double spacing = 0.0;
  int half_width = 0;
  std::vector<Vec> states;

  const Vec& at(int k) const { return states[static_cast<std::size_t>(k + half_width)]; }
};

FlowSamples sample_flow(const DynamicalSystem& system, const Vec& x, int half_width,
                        const StencilOptions& options = {});

// Applies the central first-derivative stencil to uniformly spaced samples;
// the result is shorter by 2 * kStencilHalfWidth and stays centred.
std::vector<double> differentiate(std::span<const double> values, double spacing);

// (h, L_f h, ..., L_f^{order-1} h)(x) as time derivatives of h along the flow.
Vec lie_derivatives(const DynamicalSystem& system, const Vec& x, int order,
                    const StencilOptions& options = {});

struct InvarianceReport {
  Box visited;
  bool pass = false;
  std::size_t runs = 0;
};

InvarianceReport check_forward_invariance(const DynamicalSystem& system, const Box& initial,
                                          const Box& invariant, double horizon, int grid, double dt);

// min over pairs with |x_a - x_b| >= min_sep of |g_a - g_b| / |x_a - x_b|.
double injectivity_margin(const PointSet& domain, const PointSet& image, double min_sep);

namespace plants {

// x1' = x2, x2' = -0.2 x1 - x1^3, y = x1.
DynamicalSystem duffing();
DynamicalSystem zero_field(int n);
// f(x) = rate * x, y = x1.
DynamicalSystem linear(int n, double rate);

// Hand-derived (h, L_f h, L_f^2 h) for the Duffing plant.
Vec duffing_lie_symbolic(const Vec& x);

}  // namespace plants

using PlantFactory = std::function<DynamicalSystem()>;

// Plant lookup by name; "duffing" is built in, others come from register_plant.
DynamicalSystem make_plant(std::string_view name);
void register_plant(std::string name, PlantFactory factory);

}  // namespace kkl
