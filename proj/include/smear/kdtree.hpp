#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include <Eigen/Core>

namespace smear {

/// Static 3-d tree over a point array (the array must outlive the tree).
class KdTree {
 public:
  struct Neighbor {
    std::uint32_t index = 0;
    double squared_distance = 0.0;
    bool operator<(const Neighbor& o) const {
      return squared_distance < o.squared_distance ||
             (squared_distance == o.squared_distance && index < o.index);
    }
  };

  explicit KdTree(const std::vector<Eigen::Vector3d>& points) : points_(&points) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(points.size() / kLeafSize * 2 + 2);
    if (!points.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }

  /// Nearest point within max_distance; returns false when none qualifies.
  bool nearest(const Eigen::Vector3d& q, double max_distance, Neighbor& out) const {
    if (nodes_.empty()) return false;
    Neighbor best{0, max_distance * max_distance};
    bool found = false;
    search_nearest(0, q, best, found);
    if (found) out = best;
    return found;
  }

  /// k nearest neighbors sorted by distance (fewer if the tree is smaller).
  std::vector<Neighbor> knn(const Eigen::Vector3d& q, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (nodes_.empty() || k == 0) return heap;
    heap.reserve(k + 1);
    search_knn(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    bool leaf() const { return left < 0; }
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin((*points_)[order_[i]]);
      hi = hi.cwiseMax((*points_)[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t a, std::uint32_t b) {
                       const double va = (*points_)[a][axis], vb = (*points_)[b][axis];
                       return va < vb || (va == vb && a < b);
                     });
    const double split = (*points_)[order_[mid]][axis];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search_nearest(std::int32_t id, const Eigen::Vector3d& q, Neighbor& best, bool& found) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.leaf()) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const Neighbor cand{order_[i], ((*points_)[order_[i]] - q).squaredNorm()};
        if (cand.squared_distance <= best.squared_distance && (!found || cand < best)) {
          best = cand;
          found = true;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::int32_t first = diff < 0.0 ? n.left : n.right;
    const std::int32_t second = diff < 0.0 ? n.right : n.left;
    search_nearest(first, q, best, found);
    if (diff * diff <= best.squared_distance) search_nearest(second, q, best, found);
  }

  void search_knn(std::int32_t id, const Eigen::Vector3d& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.leaf()) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const Neighbor cand{order_[i], ((*points_)[order_[i]] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::int32_t first = diff < 0.0 ? n.left : n.right;
    const std::int32_t second = diff < 0.0 ? n.right : n.left;
    search_knn(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().squared_distance) search_knn(second, q, k, heap);
  }

  const std::vector<Eigen::Vector3d>* points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace smear
