#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "msmap/factor_graph.hpp"
#include "msmap/keyframe.hpp"
#include "msmap/metrics.hpp"
#include "msmap/registration.hpp"
#include "msmap/sim.hpp"

// Line-oriented key=value configuration. Unknown keys are rejected so typos
// fail loudly instead of silently running defaults.

namespace msmap {

/// Configuration errors; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MergeMode { upgo, fpgo, f2f, m2f };

MergeMode parse_merge_mode(const std::string& name);
std::string merge_mode_name(MergeMode mode);

struct PipelineConfig {
  MergeMode mode = MergeMode::upgo;
  std::uint64_t seed = 1;
  double noise_scale = 0.01;  // 0.01 indoor, 100 outdoor

  KeyframeConfig keyframe;
  IcpConfig registration;
  OptimizeConfig optimizer;
  MetricConfig metrics;
  FixedNoiseTable fixed_noise;

  double loop_search_radius = 5.0;  // m, old-keyframe candidate search
  double map_downsample_leaf = 0.08;  // m, registration-target resolution
  double map_output_leaf = 0.05;      // m, merged-map export resolution
  int normal_k = 12;
};

/// Defaults when path is empty; otherwise parses the key=value file.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

Scene load_scene(const std::filesystem::path& path);
SessionSpec load_session_spec(const std::filesystem::path& path);

}  // namespace msmap
