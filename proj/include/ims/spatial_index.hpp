#pragma once

#include "ims/mesh.hpp"

#include <span>
#include <vector>

namespace ims {

/// Static k-d tree over a point set. Query results are exactly those of an
/// exhaustive sort by (squared distance, point index).
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points);

  std::size_t size() const noexcept { return points_.size(); }

  /// Indices into the original point span, nearest first.
  std::vector<std::uint32_t> nearest(const Point3& query, std::size_t k) const;
  std::uint32_t nearest_one(const Point3& query) const;

 private:
  struct Node {
    // Leaf when axis < 0: items [begin, end) of order_.
    int axis = -1;
    double split = 0.0;
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace ims
