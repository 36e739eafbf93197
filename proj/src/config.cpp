#include "msmap/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include "msmap/io.hpp"

namespace msmap {

namespace {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<Entry> read_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = line.substr(first, eq - first);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(eq + 1);
    const auto vfirst = value.find_first_not_of(" \t");
    value = vfirst == std::string::npos ? "" : value.substr(vfirst);
    if (!value.empty()) value.erase(value.find_last_not_of(" \t") + 1);
    entries.push_back({key, value, lineno});
  }
  return entries;
}

[[noreturn]] void bad_entry(const std::filesystem::path& path, const Entry& e,
                            const std::string& what) {
  throw ConfigError(path.string() + ":" + std::to_string(e.line) + ": " + what +
                    " (key '" + e.key + "')");
}

double to_double(const std::filesystem::path& p, const Entry& e) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) bad_entry(p, e, "trailing characters");
    return v;
  } catch (const std::logic_error&) {
    bad_entry(p, e, "expected a number");
  }
}

long to_long(const std::filesystem::path& p, const Entry& e) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(e.value, &pos);
    if (pos != e.value.size()) bad_entry(p, e, "trailing characters");
    return v;
  } catch (const std::logic_error&) {
    bad_entry(p, e, "expected an integer");
  }
}

bool to_bool(const std::filesystem::path& p, const Entry& e) {
  if (e.value == "1" || e.value == "true") return true;
  if (e.value == "0" || e.value == "false") return false;
  bad_entry(p, e, "expected 0/1/true/false");
}

std::vector<double> to_doubles(const std::filesystem::path& p, const Entry& e) {
  std::istringstream ls(e.value);
  std::vector<double> out;
  double v;
  while (ls >> v) out.push_back(v);
  if (!ls.eof()) bad_entry(p, e, "expected a list of numbers");
  return out;
}

}  // namespace

MergeMode parse_merge_mode(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
  if (lower == "upgo") return MergeMode::upgo;
  if (lower == "fpgo") return MergeMode::fpgo;
  if (lower == "f2f") return MergeMode::f2f;
  if (lower == "m2f") return MergeMode::m2f;
  throw ConfigError("unknown mode '" + name + "' (upgo|fpgo|f2f|m2f)");
}

std::string merge_mode_name(MergeMode mode) {
  switch (mode) {
    case MergeMode::upgo: return "upgo";
    case MergeMode::fpgo: return "fpgo";
    case MergeMode::f2f: return "f2f";
    case MergeMode::m2f: return "m2f";
  }
  return "?";
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;

  for (const auto& e : read_entries(path)) {
    if (e.key == "mode") {
      cfg.mode = parse_merge_mode(e.value);
    } else if (e.key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_long(path, e));
    } else if (e.key == "noise_scale") {
      cfg.noise_scale = to_double(path, e);
    } else if (e.key == "kf_mode") {
      if (e.value == "wasserstein") cfg.keyframe.mode = GateMode::wasserstein;
      else if (e.value == "radius") cfg.keyframe.mode = GateMode::radius;
      else bad_entry(path, e, "expected wasserstein|radius");
    } else if (e.key == "kf_tau") {
      cfg.keyframe.tau = to_double(path, e);
    } else if (e.key == "kf_voxel_size") {
      cfg.keyframe.voxel_size = to_double(path, e);
    } else if (e.key == "kf_map_radius") {
      cfg.keyframe.map_radius = to_double(path, e);
    } else if (e.key == "kf_min_points") {
      cfg.keyframe.w2.min_points = static_cast<int>(to_long(path, e));
    } else if (e.key == "kf_count_weighted") {
      cfg.keyframe.w2.count_weighted = to_bool(path, e);
    } else if (e.key == "kf_trans_thresh") {
      cfg.keyframe.trans_thresh = to_double(path, e);
    } else if (e.key == "kf_rot_thresh") {
      cfg.keyframe.rot_thresh = to_double(path, e);
    } else if (e.key == "reg_max_corr_dist") {
      cfg.registration.max_corr_dist = to_double(path, e);
    } else if (e.key == "reg_max_iter") {
      cfg.registration.max_iter = static_cast<int>(to_long(path, e));
    } else if (e.key == "reg_tol") {
      cfg.registration.tol = to_double(path, e);
    } else if (e.key == "reg_max_condition") {
      cfg.registration.max_condition = to_double(path, e);
    } else if (e.key == "opt_max_iter") {
      cfg.optimizer.max_iter = static_cast<int>(to_long(path, e));
    } else if (e.key == "opt_rel_tol") {
      cfg.optimizer.rel_tol = to_double(path, e);
    } else if (e.key == "metric_knn_dist") {
      cfg.metrics.knn_dist = to_double(path, e);
    } else if (e.key == "metric_inlier_thresh") {
      cfg.metrics.inlier_thresh = to_double(path, e);
    } else if (e.key == "metric_mme_radius") {
      cfg.metrics.mme_radius = to_double(path, e);
    } else if (e.key == "metric_mme_min_neighbors") {
      cfg.metrics.mme_min_neighbors = static_cast<int>(to_long(path, e));
    } else if (e.key == "metric_assoc_tol") {
      cfg.metrics.assoc_tol = to_double(path, e);
    } else if (e.key == "metric_ate_align") {
      cfg.metrics.ate_align = to_bool(path, e);
    } else if (e.key == "loop_search_radius") {
      cfg.loop_search_radius = to_double(path, e);
    } else if (e.key == "map_downsample_leaf") {
      cfg.map_downsample_leaf = to_double(path, e);
    } else if (e.key == "map_output_leaf") {
      cfg.map_output_leaf = to_double(path, e);
    } else if (e.key == "normal_k") {
      cfg.normal_k = static_cast<int>(to_long(path, e));
    } else {
      bad_entry(path, e, "unknown key");
    }
  }
  cfg.registration.noise_scale = cfg.noise_scale;
  return cfg;
}

Scene load_scene(const std::filesystem::path& path) {
  Scene scene;
  for (const auto& e : read_entries(path)) {
    if (e.key != "patch") bad_entry(path, e, "unknown key");
    const auto v = to_doubles(path, e);
    if (v.size() != 10)
      bad_entry(path, e, "patch needs cx cy cz ux uy uz vx vy vz density");
    scene.patches.push_back({{v[0], v[1], v[2]},
                             {v[3], v[4], v[5]},
                             {v[6], v[7], v[8]},
                             v[9]});
  }
  if (scene.patches.empty())
    throw ConfigError(path.string() + ": scene has no patches");
  return scene;
}

SessionSpec load_session_spec(const std::filesystem::path& path) {
  SessionSpec spec;
  for (const auto& e : read_entries(path)) {
    if (e.key == "waypoint") {
      const auto v = to_doubles(path, e);
      if (v.size() != 3 && v.size() != 4)
        bad_entry(path, e, "waypoint needs x y z [dwell]");
      spec.waypoints.push_back({{v[0], v[1], v[2]}, v.size() == 4 ? v[3] : 0.0});
    } else if (e.key == "speed") {
      spec.speed = to_double(path, e);
    } else if (e.key == "scan_rate") {
      spec.scan_rate = to_double(path, e);
    } else if (e.key == "scan_range") {
      spec.scan_range = to_double(path, e);
    } else if (e.key == "scan_density") {
      spec.scan_density = to_double(path, e);
    } else if (e.key == "point_noise") {
      spec.point_noise = to_double(path, e);
    } else if (e.key == "drift_rot") {
      spec.drift_rot = to_double(path, e);
    } else if (e.key == "drift_trans") {
      spec.drift_trans = to_double(path, e);
    } else if (e.key == "start_time") {
      spec.start_time = to_double(path, e);
    } else if (e.key == "seed") {
      spec.seed = static_cast<std::uint64_t>(to_long(path, e));
    } else if (e.key == "session_id") {
      spec.session_id = static_cast<int>(to_long(path, e));
    } else {
      bad_entry(path, e, "unknown key");
    }
  }
  if (spec.waypoints.empty())
    throw ConfigError(path.string() + ": spec has no waypoints");
  return spec;
}

}  // namespace msmap
