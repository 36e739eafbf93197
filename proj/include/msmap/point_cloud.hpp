#pragma once

#include <vector>

#include <Eigen/Dense>

#include "msmap/se3.hpp"

namespace msmap {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> timestamps;  // optional; empty or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline PointCloud transformed(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
  out.timestamps = cloud.timestamps;
  return out;
}

}  // namespace msmap
