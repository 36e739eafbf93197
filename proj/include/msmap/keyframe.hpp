#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

#include "msmap/se3.hpp"
#include "msmap/voxel_map.hpp"

// Distribution-aware keyframe gate: a frame becomes a keyframe when the
// average per-voxel Wasserstein distance between the map before and after
// its insertion exceeds tau. The map is updated with every frame, keyframe
// or not; only the pose-graph side consumes the decision. A radius-based
// gate (translation/rotation thresholds) is provided as the baseline.

namespace msmap {

enum class GateMode { wasserstein, radius };

struct KeyframeConfig {
  GateMode mode = GateMode::wasserstein;
  double tau = 0.6;          // m; default heuristic is 0.3 * voxel_size
  double voxel_size = 2.0;   // m
  double map_radius = 100.0; // m
  double trans_thresh = 0.1; // m, radius mode
  double rot_thresh = 0.1;   // rad, radius mode
  MapW2Options w2;
};

struct KeyframeDecision {
  bool keyframe = false;
  double distance = 0.0;   // average Wasserstein distance (or translation
                           // delta in radius mode)
  std::size_t touched = 0; // voxels whose statistics changed
};

/// Baseline gate: keyframe when the translation delta exceeds trans_thresh
/// or the rotation-angle delta exceeds rot_thresh.
KeyframeDecision decide_radius(const Pose& pose, const Pose& last_keyframe,
                               double trans_thresh, double rot_thresh);

class KeyframeSelector {
 public:
  explicit KeyframeSelector(const KeyframeConfig& config);

  /// Gates one frame given in the body frame. In wasserstein mode the voxel
  /// map is updated unconditionally and pruned around the current position.
  /// The first frame into an empty map is always a keyframe; an empty frame
  /// never is.
  KeyframeDecision decide(std::span<const Eigen::Vector3d> frame,
                          const Pose& pose);

  /// Preloads map-frame points (e.g. an existing session map) so that
  /// gating starts against a populated map.
  void seed(std::span<const Eigen::Vector3d> map_points);

  const VoxelMap& map() const { return map_; }
  const KeyframeConfig& config() const { return config_; }

 private:
  KeyframeConfig config_;
  VoxelMap map_;
  std::optional<Pose> last_keyframe_;
};

}  // namespace msmap
