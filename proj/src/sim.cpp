#include "msmap/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "msmap/kdtree.hpp"

namespace msmap {

PointCloud Scene::sample() const {
  PointCloud cloud;
  for (const auto& patch : patches) {
    const double lu = patch.edge_u.norm();
    const double lv = patch.edge_v.norm();
    const int nu = std::max(1, static_cast<int>(std::lround(lu * std::sqrt(patch.density))));
    const int nv = std::max(1, static_cast<int>(std::lround(lv * std::sqrt(patch.density))));
    for (int a = 0; a < nu; ++a)
      for (int b = 0; b < nv; ++b)
        cloud.points.push_back(patch.corner + patch.edge_u * ((a + 0.5) / nu) +
                               patch.edge_v * ((b + 0.5) / nv));
  }
  return cloud;
}

namespace {

struct Leg {
  double t0 = 0.0;
  double t1 = 0.0;
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d p1 = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

// Dwell and travel legs with per-segment heading along the travel direction.
std::vector<Leg> build_timeline(const SessionSpec& spec) {
  if (spec.waypoints.empty())
    throw std::invalid_argument("generate_session: empty waypoint list");
  if (spec.speed <= 0.0 || spec.scan_rate <= 0.0)
    throw std::invalid_argument("generate_session: speed and scan_rate must be > 0");

  std::vector<Leg> legs;
  double t = 0.0;
  double yaw = 0.0;
  // Initial heading: direction of the first nonzero travel segment.
  for (std::size_t i = 0; i + 1 < spec.waypoints.size(); ++i) {
    const Eigen::Vector3d d =
        spec.waypoints[i + 1].position - spec.waypoints[i].position;
    if (d.head<2>().norm() > 1e-12) {
      yaw = std::atan2(d.y(), d.x());
      break;
    }
  }

  for (std::size_t i = 0; i < spec.waypoints.size(); ++i) {
    const Waypoint& wp = spec.waypoints[i];
    if (wp.dwell > 0.0) {
      legs.push_back({t, t + wp.dwell, wp.position, wp.position, yaw});
      t += wp.dwell;
    }
    if (i + 1 < spec.waypoints.size()) {
      const Eigen::Vector3d next = spec.waypoints[i + 1].position;
      const double len = (next - wp.position).norm();
      if (len < 1e-12) continue;
      const Eigen::Vector3d d = next - wp.position;
      if (d.head<2>().norm() > 1e-12) yaw = std::atan2(d.y(), d.x());
      legs.push_back({t, t + len / spec.speed, wp.position, next, yaw});
      t += len / spec.speed;
    }
  }
  if (legs.empty())  // single waypoint, no dwell: one stationary instant
    legs.push_back({0.0, 0.0, spec.waypoints[0].position,
                    spec.waypoints[0].position, yaw});
  return legs;
}

Pose leg_pose(const std::vector<Leg>& legs, double t) {
  const Leg* leg = &legs.back();
  for (const auto& l : legs)
    if (t <= l.t1) {
      leg = &l;
      break;
    }
  const double span = leg->t1 - leg->t0;
  const double u = span > 0.0 ? std::clamp((t - leg->t0) / span, 0.0, 1.0) : 0.0;
  Pose pose;
  pose.rotation = so3_exp({0.0, 0.0, leg->yaw});
  pose.translation = leg->p0 + u * (leg->p1 - leg->p0);
  return pose;
}

}  // namespace

Pose true_pose_at(const SessionSpec& spec, double t) {
  return leg_pose(build_timeline(spec), t - spec.start_time);
}

Session generate_session(const Scene& scene, const SessionSpec& spec) {
  const auto legs = build_timeline(spec);
  const double duration = legs.back().t1;
  const int frame_count = static_cast<int>(std::floor(duration * spec.scan_rate)) + 1;

  Scene scan_scene = scene;
  if (spec.scan_density > 0.0)
    for (auto& patch : scan_scene.patches) patch.density = spec.scan_density;
  const PointCloud scene_cloud = scan_scene.sample();
  const KdTree scene_tree(scene_cloud.points);
  const CounterRng rng(spec.seed);

  Matrix6d process = Matrix6d::Zero();
  process.diagonal().head<3>().setConstant(spec.drift_rot * spec.drift_rot);
  process.diagonal().tail<3>().setConstant(spec.drift_trans * spec.drift_trans);

  Session session;
  session.id = spec.session_id;
  session.samples.reserve(frame_count);
  session.frames.reserve(frame_count);

  Pose drifted;
  Matrix6d cov = Matrix6d::Zero();
  Pose prev_true;
  const double dt = 1.0 / spec.scan_rate;

  for (int k = 0; k < frame_count; ++k) {
    const double t = k * dt;
    const Pose truth = leg_pose(legs, t);

    if (k == 0) {
      drifted = truth;
    } else {
      // Random-walk drift applied in the current body frame. The error-state
      // covariance accumulates in the world tangent: each step of body-frame
      // process noise is carried through the adjoint of the pose, so the
      // trace grows monotonically regardless of the path shape.
      Vector6d w = rng.normal6(1, k);
      w.head<3>() *= spec.drift_rot * std::sqrt(dt);
      w.tail<3>() *= spec.drift_trans * std::sqrt(dt);
      const Pose delta = compose(between(prev_true, truth), se3_exp(w));
      drifted = compose(drifted, delta);
      cov = symmetrized(cov + transform_covariance(process * dt, drifted));
    }
    prev_true = truth;

    PointCloud frame;
    const auto in_range = scene_tree.radius(truth.translation, spec.scan_range);
    frame.points.reserve(in_range.size());
    const Pose world_to_body = inverse(truth);
    for (std::size_t idx : in_range) {
      Eigen::Vector3d p = world_to_body.apply(scene_cloud.points[idx]);
      if (spec.point_noise > 0.0)
        p += spec.point_noise *
             rng.normal3(2, static_cast<std::uint64_t>(k) * (1ull << 24) + idx);
      frame.points.push_back(p);
    }

    session.samples.push_back({spec.start_time + t, drifted, cov, truth});
    session.frames.push_back(std::move(frame));
    session.keyframe.push_back(true);
  }
  return session;
}

OverlapPair overlap_pair(const Scene& scene, const SessionSpec& spec_a,
                         const SessionSpec& spec_b, double guess_rot_noise,
                         double guess_trans_noise) {
  OverlapPair pair;
  pair.first = generate_session(scene, spec_a);
  pair.second = generate_session(scene, spec_b);

  // Sessions share the world frame, so the exact alignment is the identity;
  // the guess models the roughly-known initial pose between sequences.
  const CounterRng rng(spec_a.seed ^ (spec_b.seed << 1) ^ 0x5eedull);
  Vector6d w = rng.normal6(3, 0);
  w.head<3>() *= guess_rot_noise;
  w.tail<3>() *= guess_trans_noise;
  pair.init_guess = se3_exp(w);
  return pair;
}

}  // namespace msmap
