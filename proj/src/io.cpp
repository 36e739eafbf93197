#include "msmap/io.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace msmap {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

[[noreturn]] void fail(const fs::path& path, std::size_t line,
                       const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

// Canonical quaternion (qw >= 0) so output is byte-stable.
std::array<double, 4> to_quat(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return {q.x(), q.y(), q.z(), q.w()};
}

void write_pose(std::ostream& out, const Pose& pose) {
  const auto q = to_quat(pose.rotation);
  out << ' ' << format_double(pose.translation.x()) << ' '
      << format_double(pose.translation.y()) << ' '
      << format_double(pose.translation.z());
  for (double v : q) out << ' ' << format_double(v);
}

Pose read_pose(std::istringstream& in, const fs::path& path, std::size_t line) {
  double tx, ty, tz, qx, qy, qz, qw;
  if (!(in >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
    fail(path, line, "expected pose (tx ty tz qx qy qz qw)");
  const double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
  if (std::abs(norm - 1.0) > 1e-6)
    fail(path, line, "quaternion norm deviates from 1 by more than 1e-6");
  const Eigen::Quaterniond q(qw, qx, qy, qz);
  return Pose(q.normalized().toRotationMatrix(), {tx, ty, tz});
}

void write_upper_triangular(std::ostream& out, const Matrix6d& m) {
  for (int r = 0; r < 6; ++r)
    for (int c = r; c < 6; ++c) out << ' ' << format_double(m(r, c));
}

Matrix6d read_upper_triangular(std::istringstream& in, const fs::path& path,
                               std::size_t line) {
  Matrix6d m;
  for (int r = 0; r < 6; ++r)
    for (int c = r; c < 6; ++c) {
      double v;
      if (!(in >> v)) fail(path, line, "expected 21 upper-triangular entries");
      m(r, c) = v;
      m(c, r) = v;
    }
  return m;
}

constexpr int kSessionIdStride = 1000000;

long flat_id(NodeId id) {
  return static_cast<long>(id.session) * kSessionIdStride + id.frame;
}

NodeId unflatten_id(long id) {
  return {static_cast<int>(id / kSessionIdStride),
          static_cast<int>(id % kSessionIdStride)};
}

std::string cloud_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu.ply", index);
  return buf;
}

}  // namespace

void save_ply(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n"
         "end_header\n";
  for (const auto& p : cloud.points)
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
        << format_double(p.z()) << '\n';
}

PointCloud load_ply(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::size_t vertex_count = 0;
  bool have_count = false;

  const auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) fail(path, lineno + 1, what);
    ++lineno;
  };

  next_line("missing ply magic");
  if (line != "ply") fail(path, lineno, "not a PLY file");
  while (true) {
    next_line("unterminated header");
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string kind;
      if (ls >> kind >> vertex_count && kind == "vertex") have_count = true;
    }
  }
  if (!have_count) fail(path, lineno, "missing vertex element");

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    next_line("truncated vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) fail(path, lineno, "malformed vertex line");
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

void save_session(const fs::path& dir, const Session& session) {
  fs::create_directories(dir / "clouds");
  auto out = open_out(dir / "manifest.txt");
  out << "session " << session.id << '\n';
  out << "frames " << session.samples.size() << '\n';
  for (std::size_t i = 0; i < session.samples.size(); ++i) {
    const auto& s = session.samples[i];
    out << "frame " << i << ' ' << format_double(s.t) << " clouds/"
        << cloud_file_name(i);
    write_pose(out, s.pose);
    write_upper_triangular(out, s.covariance);
    out << ' ' << (session.keyframe[i] ? 1 : 0) << '\n';
    save_ply(dir / "clouds" / cloud_file_name(i), session.frames[i]);
  }

  auto truth = open_out(dir / "truth.txt");
  for (std::size_t i = 0; i < session.samples.size(); ++i) {
    truth << i << ' ' << format_double(session.samples[i].t);
    write_pose(truth, session.samples[i].true_pose);
    truth << '\n';
  }
}

Session load_session(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  auto in = open_in(manifest);
  std::string line;
  std::size_t lineno = 0;

  Session session;
  std::size_t frame_count = 0;
  bool have_id = false;
  bool have_count = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "session") {
      if (!(ls >> session.id)) fail(manifest, lineno, "malformed session line");
      have_id = true;
    } else if (tok == "frames") {
      if (!(ls >> frame_count)) fail(manifest, lineno, "malformed frames line");
      have_count = true;
    } else if (tok == "frame") {
      std::size_t index;
      double t;
      std::string cloud_file;
      if (!(ls >> index >> t >> cloud_file))
        fail(manifest, lineno, "malformed frame row");
      if (index != session.samples.size())
        fail(manifest, lineno, "frame rows out of order");
      OdometrySample sample;
      sample.t = t;
      sample.pose = read_pose(ls, manifest, lineno);
      sample.covariance = read_upper_triangular(ls, manifest, lineno);
      Eigen::SelfAdjointEigenSolver<Matrix6d> es(sample.covariance);
      if (es.eigenvalues().minCoeff() < -1e-10)
        fail(manifest, lineno, "covariance is not PSD");
      int kf;
      if (!(ls >> kf)) fail(manifest, lineno, "missing keyframe flag");
      sample.true_pose = sample.pose;
      session.samples.push_back(sample);
      session.keyframe.push_back(kf != 0);
      session.frames.push_back(load_ply(dir / cloud_file));
    } else {
      fail(manifest, lineno, "unknown manifest token '" + tok + "'");
    }
  }
  if (!have_id || !have_count) fail(manifest, lineno, "incomplete manifest header");
  if (frame_count != session.samples.size())
    fail(manifest, lineno, "frame count does not match rows");

  const fs::path truth_path = dir / "truth.txt";
  if (fs::exists(truth_path)) {
    auto truth = open_in(truth_path);
    lineno = 0;
    while (std::getline(truth, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::size_t index;
      double t;
      if (!(ls >> index >> t)) fail(truth_path, lineno, "malformed truth row");
      if (index >= session.samples.size())
        fail(truth_path, lineno, "truth row for unknown frame");
      session.samples[index].true_pose = read_pose(ls, truth_path, lineno);
    }
  }
  return session;
}

void save_trajectory(const fs::path& path, const Trajectory& trajectory) {
  auto out = open_out(path);
  for (const auto& tp : trajectory) {
    out << format_double(tp.t);
    write_pose(out, tp.pose);
    out << '\n';
  }
}

Trajectory load_trajectory(const fs::path& path) {
  auto in = open_in(path);
  Trajectory out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t;
    if (!(ls >> t)) fail(path, lineno, "malformed trajectory line");
    out.push_back({t, read_pose(ls, path, lineno)});
  }
  validate_trajectory(out);
  return out;
}

void save_graph(const fs::path& path, const PoseGraph& graph) {
  auto out = open_out(path);
  for (const auto& [id, pose] : graph.nodes()) {
    out << "VERTEX_SE3:QUAT " << flat_id(id);
    write_pose(out, pose);
    out << '\n';
  }
  for (const auto& factor : graph.factors()) {
    Eigen::LDLT<Matrix6d> ldlt(factor.covariance);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw IoError("save_graph: factor covariance is not invertible");
    const Matrix6d info = symmetrized(ldlt.solve(Matrix6d::Identity()));
    switch (factor.kind) {
      case FactorKind::prior:
        out << "EDGE_SE3_PRIOR " << flat_id(factor.a);
        break;
      case FactorKind::odometry:
        out << "EDGE_SE3:QUAT " << flat_id(factor.a) << ' ' << flat_id(factor.b);
        break;
      case FactorKind::loop:
        out << "EDGE_SE3:LOOP " << flat_id(factor.a) << ' ' << flat_id(factor.b);
        break;
    }
    write_pose(out, factor.measurement);
    write_upper_triangular(out, info);
    out << '\n';
  }
}

PoseGraph load_graph(const fs::path& path) {
  auto in = open_in(path);
  PoseGraph graph;
  std::string line;
  std::size_t lineno = 0;

  const auto read_information = [&](std::istringstream& ls) {
    const Matrix6d info = read_upper_triangular(ls, path, lineno);
    Eigen::LDLT<Matrix6d> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      fail(path, lineno, "information matrix is not positive definite");
    return symmetrized(ldlt.solve(Matrix6d::Identity()));
  };
  const auto known = [&](long id) {
    if (!graph.has_node(unflatten_id(id)))
      fail(path, lineno, "edge references undeclared vertex " + std::to_string(id));
    return unflatten_id(id);
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "VERTEX_SE3:QUAT") {
      long id;
      if (!(ls >> id)) fail(path, lineno, "malformed vertex line");
      graph.add_node(unflatten_id(id), read_pose(ls, path, lineno));
    } else if (tag == "EDGE_SE3_PRIOR") {
      long id;
      if (!(ls >> id)) fail(path, lineno, "malformed prior line");
      const NodeId node = known(id);
      const Pose pose = read_pose(ls, path, lineno);
      graph.add_prior(node, pose, read_information(ls));
    } else if (tag == "EDGE_SE3:QUAT" || tag == "EDGE_SE3:LOOP") {
      long ia, ib;
      if (!(ls >> ia >> ib)) fail(path, lineno, "malformed edge line");
      const NodeId a = known(ia);
      const NodeId b = known(ib);
      const Pose pose = read_pose(ls, path, lineno);
      const Matrix6d cov = read_information(ls);
      if (tag == "EDGE_SE3:QUAT")
        graph.add_odometry(a, b, pose, cov);
      else
        graph.add_loop_between(a, b, pose, cov);
    } else {
      fail(path, lineno, "unknown tag '" + tag + "'");
    }
  }
  return graph;
}

void save_keyvalues(
    const fs::path& path,
    const std::vector<std::pair<std::string, std::string>>& entries) {
  auto out = open_out(path);
  for (const auto& [key, value] : entries) out << key << '=' << value << '\n';
}

std::map<std::string, std::string> load_keyvalues(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(path, lineno, "expected key=value");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace msmap
