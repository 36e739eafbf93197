#include "msmap/kdtree.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace msmap {

namespace {
constexpr std::uint32_t kLeafSize = 16;
}

KdTree::KdTree(std::span<const Eigen::Vector3d> points)
    : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(points_.size() / kLeafSize * 2 + 2);
  if (!points_.empty()) root_ = build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  node.axis = axis;
  node.split = points_[order_[mid]][axis];

  const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

template <typename Visit>
void KdTree::search(const Eigen::Vector3d& query, double& worst_sq,
                    Visit&& visit) const {
  if (root_ < 0) return;
  std::array<std::int32_t, 64> stack;
  int top = 0;
  stack[top++] = root_;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 <= worst_sq) visit(idx, d2);
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    if (delta * delta <= worst_sq) stack[top++] = far;
    stack[top++] = near;
  }
}

bool KdTree::nearest(const Eigen::Vector3d& query, Neighbor& out,
                     double max_dist) const {
  double worst = max_dist < std::numeric_limits<double>::infinity()
                     ? max_dist * max_dist
                     : std::numeric_limits<double>::infinity();
  bool found = false;
  Neighbor best;
  search(query, worst, [&](std::size_t idx, double d2) {
    if (d2 < best.squared_distance ||
        (d2 == best.squared_distance && idx < best.index)) {
      best = {idx, d2};
      worst = d2;
      found = true;
    }
  });
  if (found) out = best;
  return found;
}

std::vector<KdTree::Neighbor> KdTree::knn(const Eigen::Vector3d& query,
                                          std::size_t k) const {
  std::vector<Neighbor> heap;  // max-heap on squared distance
  if (k == 0) return heap;
  heap.reserve(k + 1);
  const auto cmp = [](const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance;
  };
  double worst = std::numeric_limits<double>::infinity();
  search(query, worst, [&](std::size_t idx, double d2) {
    heap.push_back({idx, d2});
    std::push_heap(heap.begin(), heap.end(), cmp);
    if (heap.size() > k) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.pop_back();
    }
    if (heap.size() == k) worst = heap.front().squared_distance;
  });
  std::sort_heap(heap.begin(), heap.end(), cmp);
  return heap;
}

std::vector<std::size_t> KdTree::radius(const Eigen::Vector3d& query,
                                        double r) const {
  std::vector<std::size_t> out;
  double worst = r * r;
  search(query, worst, [&](std::size_t idx, double) { out.push_back(idx); });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace msmap
