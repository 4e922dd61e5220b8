#pragma once

#include <string>
#include <vector>

#include "kkl/config.hpp"
#include "kkl/dynsys.hpp"
#include "kkl/filterbank.hpp"
#include "kkl/kdtree.hpp"

namespace kkl {

struct DatasetMeta {
  std::string plant;
  Json bank;
  Box initial_box;
  int grid = 0;
  double washout = 0.0;
  double dt = 0.0;
  double z_init = 0.0;
  std::size_t skipped = 0;
};

// Simulated samples (x, z ~ T(x)) with nearest-neighbour indexes on both sides.
class KklDataset {
 public:
  KklDataset(PointSet xs, PointSet zs, DatasetMeta meta);

  std::size_t size() const { return static_cast<std::size_t>(xs_.cols()); }
  int state_dim() const { return static_cast<int>(xs_.rows()); }
  int filter_dim() const { return static_cast<int>(zs_.rows()); }
  const PointSet& xs() const { return xs_; }
  const PointSet& zs() const { return zs_; }
  const DatasetMeta& meta() const { return meta_; }
  const KdTree& x_index() const { return x_index_; }
  const KdTree& z_index() const { return z_index_; }

  // Grid spacing of the initial box (x side); median nearest-neighbour
  // distance among stored z (z side). Lookups farther than 3x are flagged.
  double x_resolution() const { return x_resolution_; }
  double z_resolution() const { return z_resolution_; }

 private:
  PointSet xs_;
  PointSet zs_;
  DatasetMeta meta_;
  KdTree x_index_;
  KdTree z_index_;
  double x_resolution_ = 0.0;
  double z_resolution_ = 0.0;
};

struct GenerateOptions {
  // Every filter starts at this value.
  double z_init = 0.0;
  // 0 uses the KKL_THREADS environment variable, else hardware concurrency.
  unsigned threads = 0;
};

// Washout time 20 / min_i(k lambda_i).
double washout_time(const FilterBank& bank);

KklDataset generate_dataset(const DynamicalSystem& system, const FilterBank& bank, const Box& initial, int grid,
                            double dt, const GenerateOptions& options = {});

struct Lookup {
  Vec value;
  std::size_t index = 0;
  double distance = 0.0;
  bool extrapolated = false;
};

Lookup T_lookup(const KklDataset& ds, const Vec& x);
Lookup Tinv_lookup(const KklDataset& ds, const Vec& z);

double dataset_injectivity_margin(const KklDataset& ds, double min_sep);

// CSV with header x1..xn,z1..zm plus a "<path>.meta.json" sidecar.
void save_dataset(const KklDataset& ds, const std::string& path);
KklDataset load_dataset(const std::string& path);

unsigned worker_count(unsigned requested = 0);

}  // namespace kkl
