#include "kkl/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kkl {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(PointSet points) : points_(std::move(points)) {
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!order_.empty()) build(0, order_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  // Split along the dimension of widest spread.
  const auto dims = points_.rows();
  int best_dim = 0;
  double best_spread = -1.0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_(d, static_cast<Eigen::Index>(order_[i]));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  auto key = [&](std::size_t idx) { return points_(best_dim, static_cast<Eigen::Index>(idx)); };
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
  const double split = key(order_[mid]);
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].dim = best_dim;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::size_t node_id, std::span<const double> q, std::size_t exclude, double& best_d2,
                    std::size_t& best) const {
  const Node& node = nodes_[node_id];
  if (node.dim < 0) {
    const auto dims = static_cast<std::size_t>(points_.rows());
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (idx == exclude) continue;
      const double* p = points_.data() + idx * dims;
      double d2 = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double diff = p[d] - q[d];
        d2 += diff * diff;
      }
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  const double diff = q[static_cast<std::size_t>(node.dim)] - node.split;
  const std::size_t near = diff < 0.0 ? node.left : node.right;
  const std::size_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, exclude, best_d2, best);
  // <= keeps equal-distance candidates reachable for the index tie rule.
  if (diff * diff <= best_d2) search(far, q, exclude, best_d2, best);
}

KdTree::Hit KdTree::nearest(std::span<const double> query, std::size_t exclude) const {
  Hit hit;
  if (nodes_.empty()) return hit;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best = npos;
  search(0, query, exclude, best_d2, best);
  hit.index = best;
  hit.distance = std::sqrt(best_d2);
  return hit;
}

}  // namespace kkl
