#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msmap/factor_graph.hpp"
#include "msmap/metrics.hpp"
#include "msmap/point_cloud.hpp"
#include "msmap/sim.hpp"

// On-disk formats. Everything is line-oriented ASCII with doubles printed at
// 17 significant digits, so files are diff-friendly and round-trip exactly.
//
//   clouds      ASCII PLY with double x y z
//   sessions    manifest.txt (+ truth.txt) + clouds/frame_NNNNNN.ply
//   graphs      g2o-style VERTEX_SE3:QUAT / EDGE_SE3_PRIOR /
//               EDGE_SE3:QUAT (odometry) / EDGE_SE3:LOOP lines with 21
//               upper-triangular information entries; covariances are
//               recovered by inversion on load
//   trajectories TUM-style "t tx ty tz qx qy qz qw"
//   reports     key=value lines

namespace msmap {

/// File and format errors; the CLI maps these to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_double(double value);

void save_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_ply(const std::filesystem::path& path);

void save_session(const std::filesystem::path& dir, const Session& session);
Session load_session(const std::filesystem::path& dir);

void save_trajectory(const std::filesystem::path& path, const Trajectory& t);
Trajectory load_trajectory(const std::filesystem::path& path);

/// Graph node ids are flattened as session * 1000000 + frame.
void save_graph(const std::filesystem::path& path, const PoseGraph& graph);
PoseGraph load_graph(const std::filesystem::path& path);

void save_keyvalues(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& entries);
std::map<std::string, std::string> load_keyvalues(
    const std::filesystem::path& path);

}  // namespace msmap
