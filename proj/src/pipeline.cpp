#include "msmap/pipeline.hpp"

#include <algorithm>

#include "msmap/registration.hpp"
#include "msmap/voxel_map.hpp"

namespace msmap {

Matrix6d floor_covariance(const Matrix6d& cov, double min_eig) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(symmetrized(cov));
  const Vector6d clamped = es.eigenvalues().cwiseMax(min_eig);
  return symmetrized(es.eigenvectors() * clamped.asDiagonal() *
                     es.eigenvectors().transpose());
}

namespace {

std::vector<int> keyframe_indices(const Session& session) {
  std::vector<int> out;
  for (std::size_t i = 0; i < session.keyframe.size(); ++i)
    if (session.keyframe[i]) out.push_back(static_cast<int>(i));
  return out;
}

NoiseMode graph_noise_mode(MergeMode mode) {
  // F2F and FPGO share the fixed noise table; M2F stores the table values
  // explicitly (its map factors reuse the prior machinery, so the
  // table-by-kind swap would pick the wrong row).
  return (mode == MergeMode::fpgo || mode == MergeMode::f2f) ? NoiseMode::fpgo
                                                             : NoiseMode::upgo;
}

const PointCloud* frame_of(const std::map<int, const Session*>& sessions,
                           NodeId id) {
  auto it = sessions.find(id.session);
  if (it == sessions.end()) return nullptr;
  if (id.frame < 0 || id.frame >= static_cast<int>(it->second->frames.size()))
    return nullptr;
  return &it->second->frames[id.frame];
}

}  // namespace

PoseGraph build_session_graph(const Session& session,
                              const PipelineConfig& config) {
  PoseGraph graph;
  graph.mode = graph_noise_mode(config.mode);
  graph.fixed_noise = config.fixed_noise;

  const auto kfs = keyframe_indices(session);
  if (kfs.empty()) return graph;

  for (int idx : kfs)
    graph.add_node({session.id, idx}, session.samples[idx].pose);

  const auto& first = session.samples[kfs.front()];
  const Matrix6d prior_cov =
      config.mode == MergeMode::m2f
          ? config.fixed_noise.covariance(FactorKind::prior)
          : floor_covariance(first.covariance);
  graph.add_prior({session.id, kfs.front()}, first.pose, prior_cov);

  for (std::size_t k = 0; k + 1 < kfs.size(); ++k) {
    const auto& a = session.samples[kfs[k]];
    const auto& b = session.samples[kfs[k + 1]];
    const Matrix6d cov =
        config.mode == MergeMode::m2f
            ? config.fixed_noise.covariance(FactorKind::odometry)
            : floor_covariance(relative_pose_covariance(a.pose, a.covariance,
                                                        b.pose, b.covariance));
    graph.add_odometry({session.id, kfs[k]}, {session.id, kfs[k + 1]},
                       between(a.pose, b.pose), cov);
  }
  return graph;
}

std::vector<DecisionRecord> filter_session(Session& session,
                                           const PipelineConfig& config) {
  KeyframeSelector gate(config.keyframe);
  std::vector<DecisionRecord> records;
  records.reserve(session.samples.size());
  for (std::size_t i = 0; i < session.samples.size(); ++i) {
    const auto d = gate.decide(session.frames[i].points, session.samples[i].pose);
    session.keyframe[i] = d.keyframe;
    records.push_back({static_cast<int>(i), d.distance, d.keyframe, d.touched});
  }
  return records;
}

MergeResult merge_sessions(std::span<const Session> old_sessions,
                           std::optional<PoseGraph> old_graph,
                           const Session& new_session, const Pose& init_guess,
                           const PipelineConfig& config) {
  if (old_sessions.empty())
    throw ConfigError("merge: at least one old session is required");
  std::map<int, const Session*> old_by_id;
  for (const auto& session : old_sessions) {
    if (session.id == new_session.id ||
        !old_by_id.emplace(session.id, &session).second)
      throw ConfigError("merge: session ids must be distinct (id " +
                        std::to_string(session.id) + ")");
  }
  if (!old_graph && old_sessions.size() > 1)
    throw ConfigError("merge: chained merges need the previous graph");

  MergeResult result;
  result.graph = old_graph ? std::move(*old_graph)
                           : build_session_graph(old_sessions.front(), config);
  result.graph.mode = graph_noise_mode(config.mode);
  result.graph.fixed_noise = config.fixed_noise;
  PoseGraph& graph = result.graph;
  for (const auto& [id, pose] : graph.nodes())
    if (id.session == new_session.id)
      throw ConfigError("merge: the old graph already contains session " +
                        std::to_string(new_session.id));

  // Old keyframe map at the graph's node estimates: raw points seed the
  // keyframe gate, a downsampled copy becomes the registration target.
  std::vector<Eigen::Vector3d> old_map_points;
  std::vector<std::pair<NodeId, Eigen::Vector3d>> old_node_positions;
  Eigen::Vector3d viewpoint = Eigen::Vector3d::Zero();
  for (const auto& [id, pose] : graph.nodes()) {
    const PointCloud* frame = frame_of(old_by_id, id);
    if (frame == nullptr) continue;
    for (const auto& p : frame->points) old_map_points.push_back(pose.apply(p));
    old_node_positions.emplace_back(id, pose.translation);
    viewpoint += pose.translation;
  }
  if (!old_node_positions.empty())
    viewpoint /= static_cast<double>(old_node_positions.size());

  std::optional<PlanarTarget> target;
  if (!old_map_points.empty()) {
    PointCloud target_cloud;
    target_cloud.points =
        voxel_downsample(old_map_points, config.map_downsample_leaf);
    target.emplace(std::move(target_cloud), config.normal_k, viewpoint);
  }

  KeyframeSelector gate(config.keyframe);
  gate.seed(old_map_points);

  IcpConfig icp_config = config.registration;
  icp_config.noise_scale = config.noise_scale;

  std::optional<int> prev_kf;
  for (std::size_t f = 0; f < new_session.samples.size(); ++f) {
    const auto& sample = new_session.samples[f];
    const Pose initial_estimate = compose(init_guess, sample.pose);

    const auto decision =
        gate.decide(new_session.frames[f].points, initial_estimate);
    result.decisions.push_back({static_cast<int>(f), decision.distance,
                                decision.keyframe, decision.touched});
    if (!decision.keyframe) continue;

    const NodeId node{new_session.id, static_cast<int>(f)};
    graph.add_node(node, initial_estimate);
    ++result.new_keyframes;

    if (prev_kf) {
      const auto& prev = new_session.samples[*prev_kf];
      const Matrix6d cov =
          config.mode == MergeMode::m2f
              ? config.fixed_noise.covariance(FactorKind::odometry)
              : floor_covariance(relative_pose_covariance(
                    prev.pose, prev.covariance, sample.pose, sample.covariance));
      graph.add_odometry({new_session.id, *prev_kf}, node,
                         between(prev.pose, sample.pose), cov);
    }
    prev_kf = static_cast<int>(f);

    // One loop candidate per keyframe: the nearest old node within range.
    if (!target || old_node_positions.empty()) continue;
    const NodeId* best = nullptr;
    double best_dist = config.loop_search_radius;
    for (const auto& [id, position] : old_node_positions) {
      const double d = (position - initial_estimate.translation).norm();
      if (d <= best_dist) {
        best_dist = d;
        best = &id;
      }
    }
    if (best == nullptr) continue;

    ++result.loops_attempted;
    RegistrationResult reg = icp_point_to_plane(
        new_session.frames[f].points, *target, initial_estimate, icp_config);
    if (config.mode == MergeMode::m2f) {
      // Map-prior constraint on the new node instead of a loop edge.
      if (reg.converged && !reg.degenerate && reg.covariance_valid) {
        graph.add_prior(node, reg.transform,
                        config.fixed_noise.covariance(FactorKind::loop));
        ++result.loops_accepted;
      }
      continue;
    }
    // Relative measurement from the old node to the ICP-corrected pose; the
    // right-perturbation ICP covariance carries over unchanged.
    reg.transform = between(graph.node(*best), reg.transform);
    if (graph.add_loop(*best, node, reg)) ++result.loops_accepted;
  }

  result.report = optimize(graph, config.optimizer);

  // Assemble outputs at the optimized estimates.
  std::map<int, const Session*> all_by_id = old_by_id;
  all_by_id.emplace(new_session.id, &new_session);
  std::vector<Eigen::Vector3d> merged;
  for (const auto& [id, pose] : graph.nodes()) {
    const PointCloud* frame = frame_of(all_by_id, id);
    if (frame == nullptr) continue;
    for (const auto& p : frame->points) merged.push_back(pose.apply(p));
  }
  result.merged_map.points = voxel_downsample(merged, config.map_output_leaf);

  for (const auto& [id, pose] : graph.nodes()) {
    auto it = all_by_id.find(id.session);
    if (it == all_by_id.end() ||
        id.frame >= static_cast<int>(it->second->samples.size()))
      continue;
    result.trajectories[id.session].push_back(
        {it->second->samples[id.frame].t, pose});
  }
  return result;
}

MergeResult merge_sessions(const Session& old_session,
                           std::optional<PoseGraph> old_graph,
                           const Session& new_session, const Pose& init_guess,
                           const PipelineConfig& config) {
  return merge_sessions(std::span<const Session>(&old_session, 1),
                        std::move(old_graph), new_session, init_guess, config);
}

}  // namespace msmap
