#include "msmap/keyframe.hpp"

#include <stdexcept>
#include <vector>

namespace msmap {

KeyframeDecision decide_radius(const Pose& pose, const Pose& last_keyframe,
                               double trans_thresh, double rot_thresh) {
  const Pose delta = between(last_keyframe, pose);
  const double dt = delta.translation.norm();
  const double dr = rotation_angle(delta.rotation);
  return {dt > trans_thresh || dr > rot_thresh, dt, 0};
}

KeyframeSelector::KeyframeSelector(const KeyframeConfig& config)
    : config_(config), map_(config.voxel_size, config.map_radius) {
  if (config.tau <= 0.0) throw std::invalid_argument("keyframe: tau must be > 0");
  if (config.map_radius <= config.voxel_size)
    throw std::invalid_argument("keyframe: map_radius must exceed voxel_size");
}

void KeyframeSelector::seed(std::span<const Eigen::Vector3d> map_points) {
  map_.insert(map_points);
}

KeyframeDecision KeyframeSelector::decide(std::span<const Eigen::Vector3d> frame,
                                          const Pose& pose) {
  if (frame.empty()) return {};

  if (config_.mode == GateMode::radius) {
    KeyframeDecision decision{true, 0.0, 0};
    if (last_keyframe_)
      decision = decide_radius(pose, *last_keyframe_, config_.trans_thresh,
                               config_.rot_thresh);
    if (decision.keyframe) last_keyframe_ = pose;
    return decision;
  }

  std::vector<Eigen::Vector3d> map_frame;
  map_frame.reserve(frame.size());
  for (const auto& p : frame) map_frame.push_back(pose.apply(p));

  const bool bootstrap = map_.empty();
  const auto keys = map_.keys_of(map_frame);
  const VoxelSnapshot before = map_.snapshot(keys);
  const auto touched = map_.insert(map_frame);
  const double distance = map_w2(before, map_, touched, config_.w2);
  map_.prune(pose.translation);

  return {bootstrap || distance > config_.tau, distance, touched.size()};
}

}  // namespace msmap
