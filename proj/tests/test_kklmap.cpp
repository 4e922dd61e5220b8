#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kkl/error.hpp"
#include "kkl/kdtree.hpp"
#include "kkl/kklmap.hpp"
#include "support.hpp"

using namespace kkl;
using testing::small_dataset;

namespace {

// Injectivity margins of the 50x50 datasets at min_sep = 0.1, frozen from a
// reference run.
constexpr double kMarginFast = 0.043326224051062331;
constexpr double kMarginSlow = 0.0054358394396026733;
constexpr double kMarginNonlinear = 0.027658221748173912;

KklDataset manual(const PointSet& xs, const PointSet& zs) { return KklDataset(xs, zs, DatasetMeta{}); }

}  // namespace

TEST_CASE("washout time") {
  CHECK(washout_time(testing::nonlinear_bank_tanh()) == 10.0);
  CHECK(washout_time(testing::fast_bank()) == 10.0);
  const Vec l = Vec::LinSpaced(3, 2.0, 6.0);
  CHECK(washout_time(nonlinear_bank(builtin_tanh_blend(-5, -0.5), l, 4.0)) == 2.5);
}

TEST_CASE("generate_dataset: size, box and meta") {
  const Box x0 = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  const KklDataset ds = generate_dataset(plants::duffing(), testing::fast_bank(), x0, 6, 1e-3);
  CHECK(ds.size() == 36u);
  CHECK(ds.filter_dim() == 3);
  CHECK(ds.meta().washout == 10.0);
  CHECK(ds.meta().grid == 6);
  CHECK(ds.meta().skipped == 0u);
  CHECK(ds.x_resolution() == doctest::Approx(0.8));
  for (Eigen::Index c = 0; c < ds.xs().cols(); ++c) CHECK(testing::duffing_box().contains(Vec(ds.xs().col(c))));
}

TEST_CASE("generate_dataset: 200x200 grid gives 40000 pairs") {
  // Cheap stand-in for the Duffing run: same grid over the zero plant.
  const Box x0 = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  const FilterBank bank = linear_bank_from(-5.0, Vec::LinSpaced(3, 20.0, 60.0));
  const KklDataset ds = generate_dataset(plants::zero_field(2), bank, x0, 200, 0.05);
  CHECK(ds.size() == 40000u);
}

TEST_CASE("generate_dataset: constant output settles at psi") {
  const Box x0 = Box::make(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  const FilterBank bank = testing::nonlinear_bank_tanh();
  const KklDataset ds = generate_dataset(plants::zero_field(2), bank, x0, 7, 1e-3);
  const double bound = std::exp(-bank.slow_rate() * washout_time(bank));
  for (Eigen::Index c = 0; c < ds.xs().cols(); ++c) {
    const double y = ds.xs()(0, c);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(ds.zs()(i, c) - y) <= bound * std::abs(y) + 1e-12);
  }
}

TEST_CASE("lookups") {
  auto ds = small_dataset("nonlinear");
  SUBCASE("stored x returns its partner") {
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ds->size()); c += 97) {
      const Lookup l = T_lookup(*ds, ds->xs().col(c));
      CHECK(l.distance == 0.0);
      CHECK(l.value == Vec(ds->zs().col(c)));
      CHECK_FALSE(l.extrapolated);
    }
  }
  SUBCASE("round trip on every stored point") {
    bool all = true;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ds->size()); ++c) {
      all = all && Tinv_lookup(*ds, T_lookup(*ds, ds->xs().col(c)).value).value == Vec(ds->xs().col(c));
    }
    CHECK(all);
  }
  SUBCASE("far queries are flagged") {
    Vec far = testing::duffing_box().hi;
    far[0] += 1.0;
    CHECK(T_lookup(*ds, far).extrapolated);
    CHECK(Tinv_lookup(*ds, Vec::Constant(3, 50.0)).extrapolated);
  }
  SUBCASE("small z perturbations keep the answer") {
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ds->size()); c += 131) {
      const Vec z = ds->zs().col(c);
      const double half = 0.49 * ds->z_index().nearest(z, static_cast<std::size_t>(c)).distance;
      const Vec dir = Vec::Constant(3, 1.0 / std::sqrt(3.0));
      CHECK(Tinv_lookup(*ds, z + half * dir).index == static_cast<std::size_t>(c));
    }
  }
}

TEST_CASE("nearest neighbour ties go to the lowest index") {
  PointSet xs(2, 2), zs(1, 2);
  xs << 0, 1, 0, 0;
  zs << 10, 20;
  const KklDataset a = manual(xs, zs);
  Vec mid(2);
  mid << 0.5, 0.0;
  CHECK(T_lookup(a, mid).index == 0u);
  CHECK(T_lookup(a, mid).value[0] == 10.0);
  PointSet xr = xs.rowwise().reverse(), zr = zs.rowwise().reverse();
  const KklDataset b = manual(xr, zr);
  CHECK(T_lookup(b, mid).index == 0u);
  CHECK(T_lookup(b, mid).value[0] == 20.0);

  SUBCASE("kd-tree agrees with brute force on a lattice full of ties") {
    const auto grid = Box::make(Vec::Constant(2, 0.0), Vec::Constant(2, 1.0)).grid(9);
    PointSet pts(2, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = grid[grid.size() - 1 - i];
    const KdTree tree(pts);
    const auto queries = Box::make(Vec::Constant(2, -0.1), Vec::Constant(2, 1.1)).grid(25);
    for (const Vec& q : queries) {
      std::size_t best = 0;
      double bd = INFINITY;
      for (Eigen::Index c = 0; c < pts.cols(); ++c) {
        const double d = (pts.col(c) - q).squaredNorm();
        if (d < bd) {
          bd = d;
          best = static_cast<std::size_t>(c);
        }
      }
      CHECK(tree.nearest(q).index == best);
    }
  }
}

TEST_CASE("dataset injectivity margins") {
  SUBCASE("frozen regression values at 50x50") {
    const double fast = dataset_injectivity_margin(*small_dataset("fast"), 0.1);
    const double slow = dataset_injectivity_margin(*small_dataset("slow"), 0.1);
    const double nonlinear = dataset_injectivity_margin(*small_dataset("nonlinear"), 0.1);
    CHECK(fast > 0.0);
    CHECK(slow > 0.0);
    CHECK(nonlinear > 0.0);
    CHECK(fast == doctest::Approx(kMarginFast).epsilon(1e-9));
    CHECK(slow == doctest::Approx(kMarginSlow).epsilon(1e-9));
    CHECK(nonlinear == doctest::Approx(kMarginNonlinear).epsilon(1e-9));
  }
  SUBCASE("duplicated x with two z values is skipped by the separation floor") {
    PointSet xs(1, 3), zs(1, 3);
    xs << 0, 0, 1;
    zs << 0, 5, 2;
    CHECK(dataset_injectivity_margin(manual(xs, zs), 0.1) == 2.0);
  }
  SUBCASE("single point") {
    PointSet xs(2, 1), zs(3, 1);
    xs.setZero();
    zs.setZero();
    CHECK_THROWS_AS(dataset_injectivity_margin(manual(xs, zs), 0.1), Error);
  }
  SUBCASE("empty dataset") { CHECK_THROWS_AS(manual(PointSet(2, 0), PointSet(3, 0)), Error); }
}

TEST_CASE("save and load") {
  auto ds = small_dataset("slow");
  const std::string path = testing::temp_path("slow.csv");
  save_dataset(*ds, path);
  CHECK(std::filesystem::exists(path + ".meta.json"));
  const KklDataset back = load_dataset(path);
  CHECK(back.xs() == ds->xs());
  CHECK(back.zs() == ds->zs());
  CHECK(back.meta().grid == 50);
  CHECK(back.meta().washout == ds->meta().washout);
  CHECK(back.meta().bank == ds->meta().bank);
  CHECK(back.x_resolution() == ds->x_resolution());
  CHECK_THROWS_AS(load_dataset(testing::temp_path("missing.csv")), Error);
}

TEST_CASE("generation is deterministic") {
  const KklDataset again =
      generate_dataset(plants::duffing(), testing::nonlinear_bank_tanh(), testing::duffing_box(), 50, 1e-3);
  auto ds = small_dataset("nonlinear");
  CHECK(again.xs() == ds->xs());
  CHECK(again.zs() == ds->zs());
  GenerateOptions one;
  one.threads = 1;
  const KklDataset serial =
      generate_dataset(plants::duffing(), testing::nonlinear_bank_tanh(), testing::duffing_box(), 50, 1e-3, one);
  CHECK(serial.zs() == ds->zs());
}

TEST_CASE("washout sufficiency") {
  for (const char* name : {"fast", "slow", "nonlinear"}) {
    auto ds = small_dataset(name);
    const FilterBank bank = bank_from_json(ds->meta().bank);
    GenerateOptions opts;
    opts.z_init = 10.0;
    const KklDataset shifted = generate_dataset(plants::duffing(), bank, testing::duffing_box(), 50, 1e-3, opts);
    const Vec rates = bank.component_rates();
    const double t_l = washout_time(bank);
    bool ok = true;
    double worst_rel = 0;
    for (Eigen::Index c = 0; c < shifted.zs().cols(); ++c) {
      for (int i = 0; i < bank.size(); ++i) {
        const double diff = std::abs(shifted.zs()(i, c) - ds->zs()(i, c));
        // Both runs see the same output, so each component starts 10 apart.
        ok = ok && diff <= 10.0 * std::exp(-rates[i] * t_l) * 1.05;
        worst_rel = std::max(worst_rel, diff / (1.0 + std::abs(ds->zs()(i, c))));
      }
    }
    CHECK_MESSAGE(ok, std::string(name));
    if (std::string(name) == "fast") CHECK(worst_rel < 1e-4);
  }
}

TEST_CASE("flow compatibility") {
  const DynamicalSystem duff = plants::duffing();
  for (const char* name : {"fast", "slow", "nonlinear"}) {
    auto ds = small_dataset(name);
    const FilterBank bank = bank_from_json(ds->meta().bank);
    // Lipschitz estimate of T over stored pairs at lookup-sized separations.
    double lip = 0;
    const PointSet& xs = ds->xs();
    const PointSet& zs = ds->zs();
    for (Eigen::Index a = 0; a < xs.cols(); ++a) {
      for (Eigen::Index b = a + 1; b < xs.cols(); ++b) {
        const double dx = (xs.col(a) - xs.col(b)).norm();
        if (dx >= 0.02 && dx <= 0.5) lip = std::max(lip, (zs.col(a) - zs.col(b)).norm() / dx);
      }
    }
    const double residual = 20.0 * std::exp(-bank.slow_rate() * washout_time(bank));
    Interconnection link(duff, bank);
    bool ok = true;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ds->size()); c += 53) {
      std::vector<double> s{ds->xs()(0, c), ds->xs()(1, c), ds->zs()(0, c), ds->zs()(1, c), ds->zs()(2, c)};
      link.run(s, 0.0, 1.5, 1e-3);
      Vec x(2), z(3);
      x << s[0], s[1];
      z << s[2], s[3], s[4];
      const Lookup l = T_lookup(*ds, x);
      ok = ok && (z - l.value).norm() <= lip * l.distance + residual;
    }
    CHECK_MESSAGE(ok, std::string(name));
  }
}
