#include "ims/spatial_index.hpp"

#include <algorithm>
#include <queue>

namespace ims {
namespace {

constexpr std::uint32_t kLeafSize = 12;

struct Candidate {
  double d2;
  std::uint32_t id;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && id < o.id);
  }
};

}  // namespace

KdTree::KdTree(std::span<const Point3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) root_ = build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{});
  if (end - begin <= kLeafSize) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  Point3 lo = points_[order_[begin]], hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  Node& n = nodes_[index];
  n.axis = axis;
  n.split = split;
  n.begin = begin;
  n.end = end;
  n.left = left;
  n.right = right;
  return index;
}

std::vector<std::uint32_t> KdTree::nearest(const Point3& query, std::size_t k) const {
  k = std::min(k, points_.size());
  std::vector<std::uint32_t> result;
  if (k == 0) return result;

  // Max-heap of the best k so far; top() is the current worst.
  std::priority_queue<Candidate> best;
  auto visit = [&](auto&& self, std::int32_t node_index) -> void {
    const Node& node = nodes_[node_index];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const Candidate c{squared_distance(points_[order_[i]], query), order_[i]};
        if (best.size() < k) {
          best.push(c);
        } else if (c < best.top()) {
          best.pop();
          best.push(c);
        }
      }
      return;
    }
    // Points left of the split have coordinate <= split, right >= split.
    const double diff = query[node.axis] - node.split;
    const auto near = diff <= 0.0 ? node.left : node.right;
    const auto far = diff <= 0.0 ? node.right : node.left;
    self(self, near);
    // Ties must still be explored so that lower indices win.
    if (best.size() < k || diff * diff <= best.top().d2) self(self, far);
  };
  visit(visit, root_);

  result.resize(best.size());
  for (auto i = result.size(); i-- > 0;) {
    result[i] = best.top().id;
    best.pop();
  }
  return result;
}

std::uint32_t KdTree::nearest_one(const Point3& query) const {
  const auto r = nearest(query, 1);
  return r.at(0);
}

}  // namespace ims
