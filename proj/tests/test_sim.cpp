#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "msmap/voxel_map.hpp"
#include "msmap/sim.hpp"
#include "test_scenes.hpp"
#include "test_util.hpp"

using namespace msmap;
using namespace msmap::testutil;

namespace {

SessionSpec walk_spec(std::uint64_t seed) {
  SessionSpec spec;
  spec.waypoints = {{{2.0, 2.0, 1.5}, 0.0}, {{22.0, 2.0, 1.5}, 0.0}};
  spec.speed = 1.0;
  spec.scan_rate = 5.0;
  spec.scan_range = 8.0;
  spec.scan_density = 50.0;
  spec.seed = seed;
  return spec;
}

double distance_to_scene(const Scene& scene, const Eigen::Vector3d& p) {
  double best = 1e30;
  for (const auto& patch : scene.patches) {
    const Eigen::Vector3d n = patch.unit_normal();
    const Eigen::Vector3d d = p - patch.corner;
    const double u = d.dot(patch.edge_u) / patch.edge_u.squaredNorm();
    const double v = d.dot(patch.edge_v) / patch.edge_v.squaredNorm();
    if (u < -1e-9 || u > 1 + 1e-9 || v < -1e-9 || v > 1 + 1e-9) continue;
    best = std::min(best, std::abs(n.dot(d)));
  }
  return best;
}

}  // namespace

TEST_CASE("zero drift and noise reproduce the true trajectory exactly") {
  const Scene scene = corridor_scene();
  const Session session = generate_session(scene, walk_spec(7));
  REQUIRE(!session.samples.empty());
  for (const auto& sample : session.samples) {
    CHECK(pose_distance(sample.pose, sample.true_pose) == 0.0);
    CHECK(sample.covariance.norm() == 0.0);
  }
}

TEST_CASE("noiseless scans land on scene patches") {
  const Scene scene = corridor_scene();
  const Session session = generate_session(scene, walk_spec(8));
  for (std::size_t k = 0; k < session.frames.size(); k += 7) {
    const Pose& truth = session.samples[k].true_pose;
    for (std::size_t i = 0; i < session.frames[k].points.size(); i += 13) {
      const Eigen::Vector3d world = truth.apply(session.frames[k].points[i]);
      CHECK(distance_to_scene(scene, world) < 1e-9);
    }
  }
}

TEST_CASE("drifting sessions are deterministic and accumulate error") {
  const Scene scene = corridor_scene();
  SessionSpec spec = walk_spec(9);
  spec.drift_rot = 0.002;
  spec.drift_trans = 0.02;
  spec.point_noise = 0.01;

  const Session a = generate_session(scene, spec);
  const Session b = generate_session(scene, spec);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    CHECK((a.samples[k].pose.translation - b.samples[k].pose.translation).norm() == 0.0);
    CHECK((a.samples[k].covariance - b.samples[k].covariance).norm() == 0.0);
    REQUIRE(a.frames[k].size() == b.frames[k].size());
    for (std::size_t i = 0; i < a.frames[k].points.size(); i += 17)
      CHECK((a.frames[k].points[i] - b.frames[k].points[i]).norm() == 0.0);
  }

  const auto& last = a.samples.back();
  CHECK(pose_distance(last.pose, last.true_pose) > 1e-4);
}

TEST_CASE("odometry covariance trace never decreases") {
  const Scene scene = corridor_scene();
  SessionSpec spec = walk_spec(10);
  // Out-and-back path so the transport adjoints see direction changes too.
  spec.waypoints = {{{2, 2, 1.5}, 0.0}, {{22, 2, 1.5}, 1.0}, {{2, 2, 1.5}, 0.0}};
  spec.drift_rot = 0.003;
  spec.drift_trans = 0.03;

  const Session session = generate_session(scene, spec);
  double prev = 0.0;
  for (const auto& sample : session.samples) {
    const double tr = sample.covariance.trace();
    CHECK(tr >= prev - 1e-15);
    CHECK(min_eigenvalue(sample.covariance) > -1e-12);
    prev = tr;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("true_pose_at matches the generated samples") {
  const Scene scene = corridor_scene();
  SessionSpec spec = walk_spec(16);
  spec.start_time = 50.0;
  const Session session = generate_session(scene, spec);
  for (std::size_t k = 0; k < session.samples.size(); k += 9) {
    const Pose p = true_pose_at(spec, session.samples[k].t);
    CHECK(pose_distance(p, session.samples[k].true_pose) < 1e-12);
  }
}

TEST_CASE("dwell waypoints hold the pose stationary") {
  const Scene scene = corridor_scene();
  SessionSpec spec = walk_spec(11);
  spec.waypoints = {{{2, 2, 1.5}, 0.0}, {{10, 2, 1.5}, 3.0}, {{20, 2, 1.5}, 0.0}};

  const Session session = generate_session(scene, spec);
  int stationary = 0;
  for (std::size_t k = 1; k < session.samples.size(); ++k)
    if ((session.samples[k].true_pose.translation -
         session.samples[k - 1].true_pose.translation).norm() < 1e-12)
      ++stationary;
  // 3 s dwell at 5 Hz gives about 15 consecutive stationary steps.
  CHECK(stationary >= 13);
}

TEST_CASE("empty waypoint list is rejected") {
  const Scene scene = corridor_scene();
  SessionSpec spec;
  CHECK_THROWS_AS((void)generate_session(scene, spec), std::invalid_argument);
}

TEST_CASE("overlap pair: exact guess at zero perturbation, deterministic repeat") {
  const Scene scene = corridor_scene();
  const auto pair = overlap_pair(scene, walk_spec(12), walk_spec(13));
  CHECK(pose_distance(pair.init_guess, Pose::Identity()) == 0.0);

  const auto pair2 = overlap_pair(scene, walk_spec(12), walk_spec(13));
  REQUIRE(pair.second.samples.size() == pair2.second.samples.size());
  for (std::size_t k = 0; k < pair.second.samples.size(); k += 5)
    CHECK(pose_distance(pair.second.samples[k].pose,
                        pair2.second.samples[k].pose) == 0.0);

  const auto perturbed = overlap_pair(scene, walk_spec(12), walk_spec(13), 0.05, 0.5);
  CHECK(pose_distance(perturbed.init_guess, Pose::Identity()) > 1e-4);
}

TEST_CASE("a drifted frame registers against the clean session map") {
  const Scene scene = corridor_scene();
  SessionSpec clean_spec = walk_spec(14);
  clean_spec.point_noise = 0.005;
  const Session clean = generate_session(scene, clean_spec);

  // Assemble a downsampled map from the first 40 frames at true poses.
  std::vector<Eigen::Vector3d> stacked;
  for (int k = 0; k < 40; ++k) {
    const Pose& truth = clean.samples[k].true_pose;
    for (const auto& p : clean.frames[k].points) stacked.push_back(truth.apply(p));
  }
  PointCloud map;
  map.points = voxel_downsample(stacked, 0.08);
  const PlanarTarget target(std::move(map), 12,
                            clean.samples[20].true_pose.translation);

  SessionSpec drifted_spec = walk_spec(15);
  drifted_spec.drift_trans = 0.03;
  drifted_spec.point_noise = 0.01;
  const Session drifted = generate_session(scene, drifted_spec);
  const std::size_t k = 20;

  const auto result = icp_point_to_plane(drifted.frames[k].points, target,
                                         drifted.samples[k].pose, IcpConfig{});
  CHECK(result.converged);
  CHECK_FALSE(result.degenerate);
  CHECK(result.fitness > 0.8);
  // Recovered absolute pose should be close to the true one.
  const Vector6d err = se3_log(between(drifted.samples[k].true_pose, result.transform));
  CHECK(err.tail<3>().norm() < 0.05);
}
