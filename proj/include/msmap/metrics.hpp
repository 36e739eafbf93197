#pragma once

#include <stdexcept>
#include <vector>

#include "msmap/kdtree.hpp"
#include "msmap/point_cloud.hpp"
#include "msmap/se3.hpp"

// Trajectory and map evaluation: absolute trajectory error, map accuracy
// (inlier RMSE), Chamfer distance, and mean map entropy.

namespace msmap {

struct TrajectoryPoint {
  double t = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Throws std::invalid_argument unless timestamps strictly increase.
void validate_trajectory(const Trajectory& trajectory);

struct MetricConfig {
  double knn_dist = 1.0;         // m, nearest-neighbor search cutoff
  double inlier_thresh = 0.5;    // m, pairs closer than this count as inliers
  double mme_radius = 0.1;       // m; 0.1 indoor, 0.2 outdoor
  int mme_min_neighbors = 10;
  double assoc_tol = 0.02;       // s, timestamp association tolerance
  bool ate_align = true;         // rigid Umeyama alignment before the RMSE
  double mme_det_floor = 1e-18;  // m^6, excludes degenerate neighborhoods
};

struct NoInliersError : std::runtime_error {
  explicit NoInliersError(const std::string& what) : std::runtime_error(what) {}
  double inlier_fraction = 0.0;
};

/// Positional RMSE over timestamp-associated pose pairs, optionally after a
/// rigid (no-scale) Umeyama alignment of the estimate onto the truth.
/// Throws std::runtime_error with fewer than two associations.
double ate(const Trajectory& estimated, const Trajectory& truth,
           const MetricConfig& config = {});

struct AccuracyResult {
  double rmse = 0.0;
  double inlier_fraction = 0.0;
};

/// RMSE over inlier nearest-neighbor pairs from estimate to truth.
AccuracyResult accuracy(const PointCloud& estimate, const PointCloud& truth,
                        const MetricConfig& config = {});

/// mean_P min |p-q| + mean_Q min |q-p|.
double chamfer(const PointCloud& p, const PointCloud& q);

struct MmeResult {
  double mme = 0.0;
  double valid_fraction = 0.0;
};

/// Mean Gaussian differential entropy 0.5 ln((2 pi e)^3 |Sigma|) of local
/// neighborhoods; points with too few neighbors or a determinant below the
/// floor are excluded. Throws std::runtime_error when no point is valid.
MmeResult mme(const PointCloud& cloud, const MetricConfig& config = {});

}  // namespace msmap
