#include "kkl/kklmap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "kkl/error.hpp"

namespace kkl {

namespace {

double median_spacing(const KdTree& index) {
  const std::size_t n = index.size();
  if (n < 2) return 0.0;
  std::vector<double> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = index.points().col(static_cast<Eigen::Index>(i));
    nn[i] = index.nearest(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), i).distance;
  }
  const auto mid = nn.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(nn.begin(), mid, nn.end());
  return *mid;
}

}  // namespace

KklDataset::KklDataset(PointSet xs, PointSet zs, DatasetMeta meta)
    : xs_(std::move(xs)), zs_(std::move(zs)), meta_(std::move(meta)) {
  if (xs_.cols() == 0) throw Error(ErrorKind::Degenerate, "dataset is empty");
  if (xs_.cols() != zs_.cols()) throw Error(ErrorKind::ConfigError, "x and z columns differ in count");
  x_index_ = KdTree(xs_);
  z_index_ = KdTree(zs_);
  x_resolution_ = meta_.grid >= 2 && meta_.initial_box.dim() == state_dim() ? meta_.initial_box.spacing(meta_.grid)
                                                                           : median_spacing(x_index_);
  z_resolution_ = median_spacing(z_index_);
}

unsigned worker_count(unsigned requested) {
  unsigned n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("KKL_THREADS")) n = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

double washout_time(const FilterBank& bank) { return 20.0 / bank.gains().minCoeff(); }

KklDataset generate_dataset(const DynamicalSystem& system, const FilterBank& bank, const Box& initial, int grid,
                            double dt, const GenerateOptions& options) {
  if (initial.dim() != system.n) throw Error(ErrorKind::ConfigError, "initial box dimension differs from plant");
  const std::vector<Vec> starts = initial.grid(grid);
  const double t_l = washout_time(bank);
  const auto n = static_cast<std::size_t>(system.n);
  const auto m = static_cast<std::size_t>(bank.size());
  const std::size_t count = starts.size();

  std::vector<double> out(count * (n + m));
  std::vector<char> ok(count, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    Interconnection link(system, bank);
    std::vector<double> state(n + m);
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      std::copy(starts[i].data(), starts[i].data() + n, state.begin());
      std::fill(state.begin() + static_cast<std::ptrdiff_t>(n), state.end(), options.z_init);
      try {
        link.run(state, 0.0, t_l, dt);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
        continue;
      }
      std::copy(state.begin(), state.end(), out.begin() + static_cast<std::ptrdiff_t>(i * (n + m)));
      ok[i] = 1;
    }
  };
  const unsigned threads = std::min<unsigned>(worker_count(options.threads), static_cast<unsigned>(count));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  const auto kept = static_cast<Eigen::Index>(std::count(ok.begin(), ok.end(), 1));
  PointSet xs(static_cast<Eigen::Index>(n), kept);
  PointSet zs(static_cast<Eigen::Index>(m), kept);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (!ok[i]) continue;
    const double* row = out.data() + i * (n + m);
    for (std::size_t d = 0; d < n; ++d) xs(static_cast<Eigen::Index>(d), col) = row[d];
    for (std::size_t d = 0; d < m; ++d) zs(static_cast<Eigen::Index>(d), col) = row[n + d];
    ++col;
  }

  DatasetMeta meta;
  meta.plant = system.name;
  meta.bank = bank_to_json(bank);
  meta.initial_box = initial;
  meta.grid = grid;
  meta.washout = t_l;
  meta.dt = dt;
  meta.z_init = options.z_init;
  meta.skipped = count - static_cast<std::size_t>(kept);
  return KklDataset(std::move(xs), std::move(zs), std::move(meta));
}

namespace {

Lookup lookup(const KdTree& index, const PointSet& partner, const Vec& query, double resolution) {
  if (query.size() != index.points().rows()) throw Error(ErrorKind::ConfigError, "query has wrong dimension");
  const KdTree::Hit hit = index.nearest(query);
  Lookup out;
  out.index = hit.index;
  out.distance = hit.distance;
  out.value = partner.col(static_cast<Eigen::Index>(hit.index));
  out.extrapolated = hit.distance > 3.0 * resolution;
  return out;
}

}  // namespace

Lookup T_lookup(const KklDataset& ds, const Vec& x) { return lookup(ds.x_index(), ds.zs(), x, ds.x_resolution()); }

Lookup Tinv_lookup(const KklDataset& ds, const Vec& z) {
  return lookup(ds.z_index(), ds.xs(), z, ds.z_resolution());
}

double dataset_injectivity_margin(const KklDataset& ds, double min_sep) {
  return injectivity_margin(ds.xs(), ds.zs(), min_sep);
}

void save_dataset(const KklDataset& ds, const std::string& path) {
  std::FILE* file = std::fopen(path.c_str(), "w");
  if (!file) throw Error(ErrorKind::IoError, "cannot write " + path);
  const int n = ds.state_dim();
  const int m = ds.filter_dim();
  for (int i = 0; i < n; ++i) std::fprintf(file, "%sx%d", i ? "," : "", i + 1);
  for (int i = 0; i < m; ++i) std::fprintf(file, ",z%d", i + 1);
  std::fputc('\n', file);
  for (Eigen::Index c = 0; c < ds.xs().cols(); ++c) {
    for (int i = 0; i < n; ++i) std::fprintf(file, "%s%.16e", i ? "," : "", ds.xs()(i, c));
    for (int i = 0; i < m; ++i) std::fprintf(file, ",%.16e", ds.zs()(i, c));
    std::fputc('\n', file);
  }
  const bool failed = std::ferror(file) != 0;
  std::fclose(file);
  if (failed) throw Error(ErrorKind::IoError, "write failed for " + path);

  const DatasetMeta& meta = ds.meta();
  Json j = {{"plant", meta.plant},
            {"bank", meta.bank},
            {"initial_box", box_to_json(meta.initial_box)},
            {"washout", meta.washout},
            {"dt", meta.dt},
            {"z_init", meta.z_init},
            {"skipped", meta.skipped},
            {"pairs", ds.size()}};
  j["grid"] = Json::array();
  for (int i = 0; i < meta.initial_box.dim(); ++i) j["grid"].push_back(meta.grid);
  write_json_file(path + ".meta.json", j);
}

KklDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, path + ": missing header");
  int n = 0, m = 0;
  {
    std::stringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) {
      if (!name.empty() && name[0] == 'x') ++n;
      else if (!name.empty() && name[0] == 'z') ++m;
      else throw Error(ErrorKind::IoError, path + ": unexpected column '" + name + "'");
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* p = line.c_str();
    for (int c = 0; c < n + m; ++c) {
      char* end = nullptr;
      values.push_back(std::strtod(p, &end));
      if (end == p) throw Error(ErrorKind::IoError, path + ": bad number on row " + std::to_string(rows + 1));
      p = (*end == ',') ? end + 1 : end;
    }
    ++rows;
  }
  PointSet xs(n, static_cast<Eigen::Index>(rows));
  PointSet zs(m, static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int i = 0; i < n; ++i) xs(i, static_cast<Eigen::Index>(r)) = values[r * static_cast<std::size_t>(n + m) + static_cast<std::size_t>(i)];
    for (int i = 0; i < m; ++i) zs(i, static_cast<Eigen::Index>(r)) = values[r * static_cast<std::size_t>(n + m) + static_cast<std::size_t>(n + i)];
  }

  DatasetMeta meta;
  std::ifstream meta_in(path + ".meta.json");
  if (meta_in) {
    const Json j = read_json_file(path + ".meta.json");
    meta.plant = j.value("plant", "");
    meta.bank = j.value("bank", Json::object());
    if (j.contains("initial_box")) meta.initial_box = box_from_json(j.at("initial_box"));
    if (j.contains("grid") && j.at("grid").is_array() && !j.at("grid").empty()) meta.grid = j.at("grid")[0].get<int>();
    meta.washout = j.value("washout", 0.0);
    meta.dt = j.value("dt", 0.0);
    meta.z_init = j.value("z_init", 0.0);
    meta.skipped = j.value("skipped", std::size_t{0});
  }
  return KklDataset(std::move(xs), std::move(zs), std::move(meta));
}

}  // namespace kkl
