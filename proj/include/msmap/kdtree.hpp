#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace msmap {

// Static kd-tree over 3D points. Built once from a snapshot of the input;
// queries are const and safe to run concurrently.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;
  explicit KdTree(std::span<const Eigen::Vector3d> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::Vector3d& point(std::size_t i) const { return points_[i]; }

  /// Nearest neighbor within max_dist; false when none exists.
  bool nearest(const Eigen::Vector3d& query, Neighbor& out,
               double max_dist = std::numeric_limits<double>::infinity()) const;

  /// Up to k nearest neighbors, sorted by ascending distance.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const;

  /// Indices of all points within radius, sorted ascending.
  std::vector<std::size_t> radius(const Eigen::Vector3d& query, double r) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  template <typename Visit>
  void search(const Eigen::Vector3d& query, double& worst_sq, Visit&& visit) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace msmap
