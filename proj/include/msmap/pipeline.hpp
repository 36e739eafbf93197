#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "msmap/config.hpp"
#include "msmap/factor_graph.hpp"
#include "msmap/keyframe.hpp"
#include "msmap/metrics.hpp"
#include "msmap/sim.hpp"

// Multi-session merge: gate the new session's frames through the
// distribution-aware keyframe selector, chain them with odometry factors
// carrying propagated covariances, close loops against the old-session map
// via point-to-plane ICP, and optimize per the configured mode. Chains of
// more than two sessions are built by repeated invocation, feeding the
// merged graph and the previous session list back in as the old side.

namespace msmap {

/// Per-frame keyframe gate record (frame id, average Wasserstein distance,
/// decision, touched voxel count).
struct DecisionRecord {
  int frame = 0;
  double distance = 0.0;
  bool keyframe = false;
  std::size_t touched = 0;
};

struct MergeResult {
  PoseGraph graph;
  OptReport report;
  std::vector<DecisionRecord> decisions;
  PointCloud merged_map;  // keyframe clouds at optimized poses
  std::map<int, Trajectory> trajectories;  // per session id, optimized
  int new_keyframes = 0;
  int loops_accepted = 0;
  int loops_attempted = 0;
};

/// Covariance with eigenvalues floored at min_eig, so zero-uncertainty
/// simulator output still yields an invertible noise model.
Matrix6d floor_covariance(const Matrix6d& cov, double min_eig = 1e-10);

/// Pose graph of one session: nodes for keyframe-flagged frames, odometry
/// between consecutive keyframes with propagated relative covariance, and a
/// prior on the first keyframe using its front-end covariance.
PoseGraph build_session_graph(const Session& session,
                              const PipelineConfig& config);

/// Gates frames of `session` against a fresh map (single-session filtering);
/// returns the decision log and updates the keyframe flags in place.
std::vector<DecisionRecord> filter_session(Session& session,
                                           const PipelineConfig& config);

/// Merges `new_session` into the map formed by `old_sessions`. When
/// `old_graph` is absent it is built from the first old session; a provided
/// graph may span several earlier sessions (chained merges), and every old
/// graph node whose clouds are available contributes to the registration
/// target and the loop-candidate set. Session ids must be distinct.
MergeResult merge_sessions(std::span<const Session> old_sessions,
                           std::optional<PoseGraph> old_graph,
                           const Session& new_session, const Pose& init_guess,
                           const PipelineConfig& config);

/// Two-session convenience overload.
MergeResult merge_sessions(const Session& old_session,
                           std::optional<PoseGraph> old_graph,
                           const Session& new_session, const Pose& init_guess,
                           const PipelineConfig& config);

}  // namespace msmap
