#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "msmap/point_cloud.hpp"
#include "msmap/rng.hpp"
#include "msmap/se3.hpp"

// Deterministic synthetic-world generator: planar scenes, waypoint
// trajectories with dwell segments, noisy range-limited scans, and a
// drifting odometry source that emits poses with a consistent tangent-space
// covariance. Stands in for a real LiDAR-inertial front end at desk scale.

namespace msmap {

struct PlanarPatch {
  Eigen::Vector3d corner = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d edge_v = Eigen::Vector3d::UnitY();
  double density = 100.0;  // points per square meter

  Eigen::Vector3d unit_normal() const {
    return edge_u.cross(edge_v).normalized();
  }
};

struct Scene {
  std::vector<PlanarPatch> patches;

  /// Deterministic grid sampling of every patch at its density.
  PointCloud sample() const;
};

struct Waypoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double dwell = 0.0;  // seconds spent stationary at this waypoint
};

struct SessionSpec {
  std::vector<Waypoint> waypoints;
  double speed = 1.0;        // m/s
  double scan_rate = 10.0;   // Hz
  double scan_range = 30.0;  // m
  double scan_density = 0.0; // pts/m^2 sampled by the scanner; 0 keeps the
                             // patch densities (which set the map resolution)
  double point_noise = 0.0;  // m, isotropic per-coordinate std
  double drift_rot = 0.0;    // rad/sqrt(s)
  double drift_trans = 0.0;  // m/sqrt(s)
  double start_time = 0.0;   // s
  std::uint64_t seed = 0;
  int session_id = 0;
};

struct OdometrySample {
  double t = 0.0;
  Pose pose;                 // drifted odometry estimate
  Matrix6d covariance = Matrix6d::Zero();  // right-perturbation tangent cov
  Pose true_pose;
};

struct Session {
  int id = 0;
  std::vector<OdometrySample> samples;
  std::vector<PointCloud> frames;  // body-frame scans, one per sample
  std::vector<bool> keyframe;      // flags; all true until filtered
};

/// Throws std::invalid_argument on an empty waypoint list.
Session generate_session(const Scene& scene, const SessionSpec& spec);

/// True pose of the spec's trajectory at time t (clamped to the timeline).
Pose true_pose_at(const SessionSpec& spec, double t);

struct OverlapPair {
  Session first;
  Session second;
  Pose init_guess;  // maps second-session poses into the first's frame
};

/// Two sessions over one scene plus an initial alignment guess: identity
/// (the sessions share the world frame) perturbed by the given noise.
OverlapPair overlap_pair(const Scene& scene, const SessionSpec& spec_a,
                         const SessionSpec& spec_b, double guess_rot_noise = 0.0,
                         double guess_trans_noise = 0.0);

}  // namespace msmap
