#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "msmap/kdtree.hpp"
#include "msmap/point_cloud.hpp"
#include "msmap/se3.hpp"

// Point-to-plane ICP. The registration covariance is the scaled inverse
// Gauss-Newton Hessian at the converged pose, s * (J' W J)^-1 with W = I;
// s is the environment noise scale (0.01 indoor, 100 outdoor).

namespace msmap {

struct PointNormal {
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  bool valid = false;
};

/// Per-point normals from the k-neighborhood covariance (smallest
/// eigenvector), sign-canonicalized to face the viewpoint. A neighborhood
/// whose two smallest eigenvalues coincide within 1e-12 (rank < 2) yields
/// an invalid normal.
std::vector<PointNormal> estimate_normals(std::span<const Eigen::Vector3d> points,
                                          int k,
                                          const Eigen::Vector3d& viewpoint =
                                              Eigen::Vector3d::Zero());

/// Immutable registration target: points, spatial index, unit normals.
/// Shareable across concurrent registrations.
class PlanarTarget {
 public:
  /// Estimates normals from the cloud itself.
  PlanarTarget(PointCloud cloud, int normal_k,
               const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero());

  /// Uses caller-provided normals (e.g. exact normals of a synthetic scene).
  PlanarTarget(PointCloud cloud, std::vector<PointNormal> normals);

  const PointCloud& cloud() const { return cloud_; }
  const KdTree& tree() const { return tree_; }
  const std::vector<PointNormal>& normals() const { return normals_; }

 private:
  PointCloud cloud_;
  KdTree tree_;
  std::vector<PointNormal> normals_;
};

struct IcpConfig {
  double max_corr_dist = 1.0;
  int max_iter = 50;
  double tol = 1e-10;            // squared-update convergence threshold
  double noise_scale = 0.01;     // covariance multiplier s
  double max_condition = 1e8;    // Hessian condition beyond which the
                                 // registration is flagged degenerate
  int min_correspondences = 6;
};

struct RegistrationResult {
  Pose transform;                       // maps source frame into target frame
  Matrix6d covariance = Matrix6d::Zero();
  bool covariance_valid = false;
  double fitness = 0.0;                 // fraction of source points matched
  double rms = 0.0;                     // point-to-plane RMS at the solution
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  double condition = 0.0;
  std::vector<double> objective_history;  // cost per accepted iteration
};

RegistrationResult icp_point_to_plane(std::span<const Eigen::Vector3d> source,
                                      const PlanarTarget& target,
                                      const Pose& init, const IcpConfig& config);

}  // namespace msmap
