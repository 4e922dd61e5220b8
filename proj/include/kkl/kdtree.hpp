#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "kkl/dynsys.hpp"

namespace kkl {

// Static kd-tree over the columns of a point set. Ties in distance go to the
// lowest column index, so queries are reproducible.
class KdTree {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  struct Hit {
    std::size_t index = npos;
    double distance = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;
  explicit KdTree(PointSet points);

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  const PointSet& points() const { return points_; }

  Hit nearest(std::span<const double> query, std::size_t exclude = npos) const;
  Hit nearest(const Vec& query, std::size_t exclude = npos) const {
    return nearest(std::span<const double>(query.data(), static_cast<std::size_t>(query.size())), exclude);
  }

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int dim = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, std::span<const double> q, std::size_t exclude, double& best_d2,
              std::size_t& best) const;

  PointSet points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace kkl
