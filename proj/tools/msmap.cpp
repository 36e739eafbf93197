#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "msmap/config.hpp"
#include "msmap/io.hpp"
#include "msmap/pipeline.hpp"

// Multi-session mapping pipeline, one subcommand per stage:
//   simulate  synthetic session + ground truth from scene/spec files
//   filter    keyframe-gate an existing session in place
//   merge     merge a new session into an old session/graph and optimize
//   eval      trajectory + map metrics against ground truth
//   report    print metric files side by side
//
// Exit codes: 0 success, 2 usage/config, 3 ill-posed optimization, 4 I/O.

namespace fs = std::filesystem;
using namespace msmap;

namespace {

Trajectory odometry_trajectory(const Session& session) {
  Trajectory t;
  for (const auto& sample : session.samples) t.push_back({sample.t, sample.pose});
  return t;
}

void write_decisions(const fs::path& path,
                     const std::vector<DecisionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# frame d_w keyframe touched\n";
  for (const auto& r : records)
    out << r.frame << ' ' << format_double(r.distance) << ' '
        << (r.keyframe ? 1 : 0) << ' ' << r.touched << '\n';
}

int cmd_simulate(const fs::path& scene_path, const fs::path& spec_path,
                 const fs::path& out, std::optional<long> seed) {
  const Scene scene = load_scene(scene_path);
  SessionSpec spec = load_session_spec(spec_path);
  if (seed) spec.seed = static_cast<std::uint64_t>(*seed);

  const Session session = generate_session(scene, spec);
  save_session(out / "session", session);
  save_trajectory(out / "session" / "trajectory.txt",
                  odometry_trajectory(session));

  fs::create_directories(out / "truth");
  Trajectory truth;
  for (const auto& sample : session.samples)
    truth.push_back({sample.t, sample.true_pose});
  save_trajectory(out / "truth" / "trajectory.txt", truth);
  save_ply(out / "truth" / "map.ply", scene.sample());

  std::cout << "simulated " << session.samples.size() << " frames into "
            << (out / "session").string() << "\n";
  return 0;
}

int cmd_filter(const fs::path& session_dir, const fs::path& config_path,
               const fs::path& out) {
  const PipelineConfig config = load_pipeline_config(config_path);
  Session session = load_session(session_dir);
  const auto records = filter_session(session, config);

  save_session(out, session);
  save_trajectory(out / "trajectory.txt", odometry_trajectory(session));
  write_decisions(out / "decisions.txt", records);

  int kept = 0;
  for (bool b : session.keyframe) kept += b ? 1 : 0;
  std::cout << "kept " << kept << " of " << session.samples.size()
            << " frames as keyframes\n";
  return 0;
}

int cmd_merge(const std::vector<std::string>& old_dirs, const fs::path& new_dir,
              const fs::path& graph_path, const fs::path& config_path,
              const fs::path& out, const std::string& mode_override,
              const std::vector<double>& init_values) {
  PipelineConfig config = load_pipeline_config(config_path);
  if (!mode_override.empty()) config.mode = parse_merge_mode(mode_override);

  Pose init_guess;
  if (!init_values.empty()) {
    if (init_values.size() != 7)
      throw ConfigError("--init needs 7 values: tx ty tz qx qy qz qw");
    Eigen::Quaterniond q(init_values[6], init_values[3], init_values[4],
                         init_values[5]);
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw ConfigError("--init quaternion is not normalized");
    init_guess = Pose(q.normalized().toRotationMatrix(),
                      {init_values[0], init_values[1], init_values[2]});
  }

  std::vector<Session> old_sessions;
  for (const auto& dir : old_dirs)
    old_sessions.push_back(load_session(dir));
  const Session new_session = load_session(new_dir);

  std::optional<PoseGraph> old_graph;
  if (!graph_path.empty()) {
    old_graph = load_graph(graph_path);
  } else if (fs::exists(fs::path(old_dirs.front()) / "graph.g2o")) {
    old_graph = load_graph(fs::path(old_dirs.front()) / "graph.g2o");
  }

  const MergeResult result = merge_sessions(old_sessions, std::move(old_graph),
                                            new_session, init_guess, config);

  fs::create_directories(out);
  save_graph(out / "graph.g2o", result.graph);
  save_ply(out / "map.ply", result.merged_map);
  for (const auto& [session_id, trajectory] : result.trajectories)
    save_trajectory(out / ("trajectory_s" + std::to_string(session_id) + ".txt"),
                    trajectory);
  save_trajectory(out / "trajectory.txt",
                  result.trajectories.at(new_session.id));
  write_decisions(out / "decisions.txt", result.decisions);

  save_keyvalues(
      out / "report.txt",
      {{"mode", merge_mode_name(config.mode)},
       {"nodes", std::to_string(result.graph.nodes().size())},
       {"factors", std::to_string(result.graph.factors().size())},
       {"new_keyframes", std::to_string(result.new_keyframes)},
       {"loops_attempted", std::to_string(result.loops_attempted)},
       {"loops_accepted", std::to_string(result.loops_accepted)},
       {"initial_cost", format_double(result.report.initial_cost)},
       {"final_cost", format_double(result.report.final_cost)},
       {"iterations", std::to_string(result.report.iterations)},
       {"converged", result.report.converged ? "1" : "0"},
       {"condition", format_double(result.report.condition)}});

  {
    const auto margs = marginals(result.graph);
    std::ofstream mout(out / "marginals.txt");
    if (!mout) throw IoError("cannot write marginals.txt");
    mout << "# session frame trace rot_trace trans_trace\n";
    for (const auto& [id, cov] : margs)
      mout << id.session << ' ' << id.frame << ' '
           << format_double(cov.trace()) << ' '
           << format_double(cov.topLeftCorner<3, 3>().trace()) << ' '
           << format_double(cov.bottomRightCorner<3, 3>().trace()) << '\n';
  }
  {
    // Post-optimization residual per edge, for error-adjustment analysis.
    std::ofstream eout(out / "edge_errors.txt");
    if (!eout) throw IoError("cannot write edge_errors.txt");
    eout << "# index kind unweighted weighted\n";
    const char* names[] = {"prior", "odometry", "loop"};
    for (const auto& edge : edge_error_report(result.graph))
      eout << edge.index << ' ' << names[static_cast<int>(edge.kind)] << ' '
           << format_double(edge.unweighted) << ' '
           << format_double(edge.weighted) << '\n';
  }

  std::cout << merge_mode_name(config.mode) << " merge: "
            << result.new_keyframes << " keyframes, " << result.loops_accepted
            << "/" << result.loops_attempted << " loops, cost "
            << result.report.initial_cost << " -> " << result.report.final_cost
            << "\n";
  return 0;
}

int cmd_eval(const fs::path& estimate_dir, const fs::path& truth_dir,
             const fs::path& config_path, fs::path out,
             const std::string& trajectory_name) {
  const PipelineConfig config = load_pipeline_config(config_path);
  if (out.empty()) out = estimate_dir;
  fs::create_directories(out);

  const Trajectory estimate =
      load_trajectory(estimate_dir / trajectory_name);
  const Trajectory truth = load_trajectory(truth_dir / "trajectory.txt");
  const double ate_m = ate(estimate, truth, config.metrics);

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("ate_m", format_double(ate_m));
  std::cout << "ate_m " << format_double(ate_m) << "\n";

  const fs::path est_map = estimate_dir / "map.ply";
  if (fs::exists(est_map)) {
    const PointCloud est_cloud = load_ply(est_map);
    const PointCloud truth_cloud = load_ply(truth_dir / "map.ply");
    const auto acc = accuracy(est_cloud, truth_cloud, config.metrics);
    const double cd = chamfer(est_cloud, truth_cloud);
    kv.emplace_back("ac_m", format_double(acc.rmse));
    kv.emplace_back("cd_m", format_double(cd));
    std::cout << "ac_m " << format_double(acc.rmse) << "\ncd_m "
              << format_double(cd) << "\ninlier_fraction "
              << format_double(acc.inlier_fraction) << "\n";
    try {
      const auto entropy = mme(est_cloud, config.metrics);
      kv.emplace_back("mme", format_double(entropy.mme));
      kv.emplace_back("mme_valid_fraction", format_double(entropy.valid_fraction));
      std::cout << "mme " << format_double(entropy.mme) << "\n";
    } catch (const std::runtime_error&) {
      // Exactly planar maps have singular neighborhoods everywhere; the
      // entropy is undefined there, so the key is simply omitted.
    }
    kv.emplace_back("inlier_fraction", format_double(acc.inlier_fraction));
  }
  save_keyvalues(out / "metrics.txt", kv);

  // Keyframe statistics for distance-over-time analysis, when available.
  if (fs::exists(estimate_dir / "decisions.txt")) {
    std::ifstream in(estimate_dir / "decisions.txt");
    std::ofstream stats(out / "keyframe_stats.txt");
    stats << "# frame d_w touched\n";
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      long frame, keyframe, touched;
      double dw;
      if (ls >> frame >> dw >> keyframe >> touched)
        stats << frame << ' ' << format_double(dw) << ' ' << touched << '\n';
    }
  }
  return 0;
}

int cmd_report(const std::vector<fs::path>& dirs) {
  const std::vector<std::string> keys = {"ate_m", "ac_m", "cd_m", "mme",
                                         "inlier_fraction"};
  std::cout << "directory";
  for (const auto& k : keys) std::cout << '\t' << k;
  std::cout << '\n';
  for (const auto& dir : dirs) {
    const auto kv = load_keyvalues(dir / "metrics.txt");
    std::cout << dir.string();
    for (const auto& k : keys) {
      auto it = kv.find(k);
      std::cout << '\t' << (it == kv.end() ? "-" : it->second);
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-session LiDAR mapping pipeline"};
  app.require_subcommand(1);

  std::string scene_path, spec_path, out_dir, session_dir, config_path;
  std::string new_dir, graph_path, estimate_dir, truth_dir;
  std::string mode_override, trajectory_name = "trajectory.txt";
  std::optional<long> seed;
  std::vector<double> init_values;
  std::vector<std::string> report_dirs, old_dirs;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic session");
  sim->add_option("--scene", scene_path, "scene file")->required();
  sim->add_option("--spec", spec_path, "session spec file")->required();
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "override the spec seed");

  auto* filter = app.add_subcommand("filter", "keyframe-gate a session");
  filter->add_option("--session", session_dir, "session directory")->required();
  filter->add_option("--config", config_path, "pipeline config file");
  filter->add_option("--out", out_dir, "output session directory")->required();

  auto* merge = app.add_subcommand("merge", "merge a new session into a map");
  merge->add_option("--old", old_dirs, "old session directories (repeatable)")
      ->required();
  merge->add_option("--new", new_dir, "new session directory")->required();
  merge->add_option("--graph", graph_path,
                    "previous merged graph (default: <first old>/graph.g2o)");
  merge->add_option("--config", config_path, "pipeline config file");
  merge->add_option("--out", out_dir, "output directory")->required();
  merge->add_option("--mode", mode_override, "upgo|fpgo|f2f|m2f");
  merge->add_option("--init", init_values,
                    "initial guess tx ty tz qx qy qz qw")->expected(0, 7);

  auto* eval = app.add_subcommand("eval", "evaluate against ground truth");
  eval->add_option("--estimate", estimate_dir, "estimate directory")->required();
  eval->add_option("--truth", truth_dir, "truth directory")->required();
  eval->add_option("--config", config_path, "pipeline config file");
  eval->add_option("--out", out_dir, "report output directory");
  eval->add_option("--trajectory", trajectory_name, "trajectory file name");

  auto* report = app.add_subcommand("report", "print metric files");
  report->add_option("dirs", report_dirs, "directories with metrics.txt")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(scene_path, spec_path, out_dir, seed);
    if (filter->parsed()) return cmd_filter(session_dir, config_path, out_dir);
    if (merge->parsed())
      return cmd_merge(old_dirs, new_dir, graph_path, config_path, out_dir,
                       mode_override, init_values);
    if (eval->parsed())
      return cmd_eval(estimate_dir, truth_dir, config_path, out_dir,
                      trajectory_name);
    if (report->parsed()) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      return cmd_report(dirs);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IllPosedError& e) {
    std::cerr << "ill-posed optimization: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
