#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kkl/dynsys.hpp"
#include "kkl/error.hpp"
#include "kkl/rk4.hpp"
#include "support.hpp"

using namespace kkl;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

DynamicalSystem blow_up() {
  // x' = x^2 escapes at t = 1 / x0.
  return DynamicalSystem{"blow_up", 1, [](std::span<const double> x, std::span<double> dx) { dx[0] = x[0] * x[0]; },
                         [](std::span<const double> x) { return x[0]; }};
}

Trajectory sine_trajectory(double dt, double t1) {
  Trajectory tr;
  const StepPlan plan = StepPlan::make(0.0, t1, dt);
  for (std::size_t k = 0; k <= plan.count; ++k) {
    const double t = plan.time(k);
    tr.times.push_back(t);
    tr.states.push_back(Vec::Constant(1, std::sin(t)));
    tr.outputs.push_back(std::sin(t));
  }
  return tr;
}

}  // namespace

TEST_CASE("integrate_flow: zero field keeps the state") {
  const Trajectory tr = integrate_flow(plants::zero_field(2), v2(3, -1), 0.0, 5.0, 1e-3);
  CHECK(tr.times.back() == 5.0);
  for (const auto& x : tr.states) CHECK(x == v2(3, -1));
}

TEST_CASE("duffing vector field by hand") {
  const Vec dx = plants::duffing().field(v2(1, 0));
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == doctest::Approx(-1.2).epsilon(1e-15));
}

TEST_CASE("integrate_flow: exponential decay oracle") {
  const Trajectory tr = integrate_flow(plants::linear(1, -1.0), Vec::Constant(1, 1.0), 0.0, 1.0, 1e-3);
  CHECK(std::abs(tr.states.back()[0] - std::exp(-1.0)) < 1e-9);
  REQUIRE(tr.times.size() == tr.states.size());
  REQUIRE(tr.times.size() == tr.outputs.size());
  for (std::size_t i = 1; i < tr.times.size(); ++i) CHECK(tr.times[i] > tr.times[i - 1]);
}

TEST_CASE("integrate_flow: last step is shortened to hit t1") {
  const Trajectory tr = integrate_flow(plants::linear(1, -1.0), Vec::Constant(1, 1.0), 0.0, 1.0005, 1e-3);
  CHECK(tr.times.back() == 1.0005);
  CHECK(tr.times.size() == 1002);
  CHECK(std::abs(tr.states.back()[0] - std::exp(-1.0005)) < 1e-9);
}

TEST_CASE("integrate_flow: backward integration") {
  const Vec x = flow_to(plants::linear(1, -1.0), Vec::Constant(1, 1.0), 0.0, -1.0, 1e-3);
  CHECK(std::abs(x[0] - std::exp(1.0)) < 1e-8);
}

TEST_CASE("integrate_flow: outputs are h of the states") {
  const DynamicalSystem duff = plants::duffing();
  const Trajectory tr = integrate_flow(duff, v2(1.3, -0.4), 0.0, 2.0, 1e-2);
  for (std::size_t i = 0; i < tr.size(); ++i) CHECK(tr.outputs[i] == duff.output(tr.states[i]));
}

TEST_CASE("integrate_flow: NonFinite reports the escape") {
  try {
    integrate_flow(blow_up(), Vec::Constant(1, 1.0), 0.0, 2.0, 1e-3);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

TEST_CASE("RK4 is fourth order on the exponential oracle") {
  auto err = [](double dt) {
    return std::abs(flow_to(plants::linear(1, -1.0), Vec::Constant(1, 1.0), 0.0, 1.0, dt)[0] - std::exp(-1.0));
  };
  const double ratio = err(0.1) / err(0.05);
  CHECK(ratio >= 14.0);
  CHECK(ratio <= 18.0);
}

TEST_CASE("forward then backward returns to the start") {
  const DynamicalSystem duff = plants::duffing();
  const double dt = 1e-2, t = 5.0;
  for (const Vec& x0 : {v2(1, 1), v2(-1.5, 0.5), v2(0.2, -2)}) {
    const Vec x1 = flow_to(duff, x0, 0.0, t, dt);
    const Vec back = flow_to(duff, x1, t, 0.0, dt);
    CHECK((back - x0).norm() < 10.0 * std::pow(dt, 4) * t);
  }
}

TEST_CASE("sample_output") {
  const Trajectory tr = sine_trajectory(1e-3, 2.0);
  SUBCASE("exact at nodes") {
    for (std::size_t k : {0u, 1u, 500u, 1999u, 2000u}) CHECK(sample_output(tr, tr.times[k]) == tr.outputs[k]);
  }
  SUBCASE("mid-node error below 1e-10") {
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < tr.size(); k += 37) {
      const double t = 0.5 * (tr.times[k] + tr.times[k + 1]);
      worst = std::max(worst, std::abs(sample_output(tr, t) - std::sin(t)));
    }
    CHECK(worst < 1e-10);
  }
  SUBCASE("constant signal") {
    const Trajectory c = integrate_flow(plants::zero_field(1), Vec::Constant(1, 4.25), 0.0, 1.0, 0.1);
    for (double t : {0.0, 0.05, 0.33, 0.999}) CHECK(sample_output(c, t) == doctest::Approx(4.25).epsilon(1e-15));
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(sample_output(tr, -0.1), Error);
    CHECK_THROWS_AS(sample_output(tr, 2.1), Error);
  }
}

TEST_CASE("lie_derivatives: spec examples") {
  const DynamicalSystem duff = plants::duffing();
  const Vec l = lie_derivatives(duff, v2(1, 1), 3);
  CHECK(l[0] == 1.0);
  CHECK(l[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(l[2] == doctest::Approx(-1.2).epsilon(1e-8));

  const Vec z = lie_derivatives(plants::zero_field(2), v2(0.7, 2), 4);
  CHECK(z[0] == 0.7);
  for (int i = 1; i < 4; ++i) CHECK(z[i] == 0.0);

  const Vec e = lie_derivatives(duff, v2(0, 0), 3);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(e[i]) < 1e-14);
}

TEST_CASE("lie_derivatives agree with the symbolic Duffing derivatives") {
  const DynamicalSystem duff = plants::duffing();
  const Box box = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  double worst = 0.0;
  for (const Vec& x : box.grid(20)) {
    const Vec num = lie_derivatives(duff, x, 3);
    const Vec sym = plants::duffing_lie_symbolic(x);
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(num[i] - sym[i]) / std::max(1.0, std::abs(sym[i])));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("lie_derivatives: stencil leaving the finite range") {
  StencilOptions opts;
  opts.spacing = 0.5;
  opts.integration_dt = 1e-2;
  try {
    lie_derivatives(blow_up(), Vec::Constant(1, 1.0), 3, opts);
    FAIL("expected StencilOutOfDomain");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::StencilOutOfDomain);
  }
}

TEST_CASE("check_forward_invariance") {
  const Box x0 = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  SUBCASE("zero field visits only the initial box") {
    const InvarianceReport r = check_forward_invariance(plants::zero_field(2), x0, x0, 5.0, 7, 0.1);
    CHECK(r.pass);
    CHECK(r.visited.lo == x0.lo);
    CHECK(r.visited.hi == x0.hi);
  }
  SUBCASE("unstable linear field escapes") {
    const InvarianceReport r = check_forward_invariance(plants::linear(2, 1.0), x0, x0, 5.0, 5, 1e-2);
    CHECK_FALSE(r.pass);
  }
  SUBCASE("duffing stays in its inflated tight box") {
    const Box& box = testing::duffing_box();
    const InvarianceReport r = check_forward_invariance(plants::duffing(), x0, box, 50.0, 41, 1e-3);
    CHECK(r.pass);
    CHECK(r.runs == 41u * 41u);
    // Energy x2^2/2 + 0.1 x1^2 + x1^4/4 is conserved, which bounds both axes.
    // The corner (2, 2) carries the largest energy.
    const double energy = 0.1 * 4 + 4.0 + 2.0;
    const double x1_max = std::sqrt((-0.4 + std::sqrt(0.16 + 16 * energy)) / 2);
    CHECK(r.visited.hi[1] == doctest::Approx(std::sqrt(2 * energy)).epsilon(1e-4));
    CHECK(r.visited.hi[0] == doctest::Approx(x1_max).epsilon(1e-4));
    CHECK(r.visited.lo[0] == doctest::Approx(-x1_max).epsilon(1e-4));
  }
}

TEST_CASE("injectivity_margin") {
  const Box box = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  const auto pts = box.grid(12);
  PointSet xs(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) xs.col(static_cast<Eigen::Index>(i)) = pts[i];

  CHECK(injectivity_margin(xs, xs, 0.1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(injectivity_margin(xs, PointSet::Constant(3, xs.cols(), 2.5), 0.1) == 0.0);
  CHECK_THROWS_AS(injectivity_margin(xs, xs, 100.0), Error);
  CHECK_THROWS_AS(injectivity_margin(xs.leftCols(1), xs.leftCols(1), 0.1), Error);
  CHECK_THROWS_AS(injectivity_margin(xs, xs, 0.0), Error);

  SUBCASE("permutation invariant") {
    PointSet g(1, xs.cols());
    for (Eigen::Index i = 0; i < xs.cols(); ++i) g(0, i) = xs(0, i) + 0.3 * std::sin(xs(1, i));
    const double base = injectivity_margin(xs, g, 0.2);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(xs.cols()));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>((i * 37) % perm.size());
    std::sort(perm.begin(), perm.end());
    std::reverse(perm.begin(), perm.end());
    PointSet xp(2, xs.cols()), gp(1, xs.cols());
    for (Eigen::Index i = 0; i < xs.cols(); ++i) {
      xp.col(i) = xs.col(perm[static_cast<std::size_t>(i)]);
      gp.col(i) = g.col(perm[static_cast<std::size_t>(i)]);
    }
    CHECK(injectivity_margin(xp, gp, 0.2) == base);
  }

  SUBCASE("H2 of the Duffing plant is the identity") {
    const auto grid = box.grid(50);
    PointSet dom(2, static_cast<Eigen::Index>(grid.size())), img(2, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      dom.col(static_cast<Eigen::Index>(i)) = grid[i];
      img.col(static_cast<Eigen::Index>(i)) = lie_derivatives(plants::duffing(), grid[i], 2);
    }
    CHECK(std::abs(injectivity_margin(dom, img, 0.1) - 1.0) < 1e-9);
  }
}

TEST_CASE("Box and plant registry") {
  CHECK_THROWS_AS(Box::make(v2(0, 1), v2(1, 1)), Error);
  const Box b = Box::make(v2(-1, 0), v2(1, 4));
  CHECK(b.contains(v2(0, 2)));
  CHECK_FALSE(b.contains(v2(0, 5)));
  CHECK(b.grid(3).size() == 9u);
  CHECK(b.grid(3)[1] == v2(-1, 2));
  CHECK(b.spacing(5) == 1.0);
  const Box big = b.inflated(0.5);
  CHECK(big.lo == v2(-2, -2));
  CHECK(big.contains(b));

  CHECK(make_plant("duffing").n == 2);
  CHECK_THROWS_AS(make_plant("nope"), Error);
  register_plant("test_decay", [] { return plants::linear(3, -2.0); });
  CHECK(make_plant("test_decay").n == 3);
}
