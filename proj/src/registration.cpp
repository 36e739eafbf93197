#include "msmap/registration.hpp"

#include <cmath>
#include <stdexcept>

namespace msmap {

std::vector<PointNormal> estimate_normals(std::span<const Eigen::Vector3d> points,
                                          int k, const Eigen::Vector3d& viewpoint) {
  if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
  if (points.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("estimate_normals: cloud smaller than k");

  const KdTree tree(points);
  std::vector<PointNormal> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nbrs = tree.knn(points[i], static_cast<std::size_t>(k));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : nbrs) mean += tree.point(nb.index);
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Eigen::Vector3d d = tree.point(nb.index) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    // Rank-deficient neighborhood (e.g. collinear points): no unique plane.
    if (es.eigenvalues()[1] - es.eigenvalues()[0] <= 1e-12) continue;
    Eigen::Vector3d n = es.eigenvectors().col(0);
    if (n.dot(viewpoint - points[i]) < 0.0) n = -n;
    out[i] = {n, true};
  }
  return out;
}

PlanarTarget::PlanarTarget(PointCloud cloud, int normal_k,
                           const Eigen::Vector3d& viewpoint)
    : cloud_(std::move(cloud)),
      tree_(cloud_.points),
      normals_(estimate_normals(cloud_.points, normal_k, viewpoint)) {}

PlanarTarget::PlanarTarget(PointCloud cloud, std::vector<PointNormal> normals)
    : cloud_(std::move(cloud)), tree_(cloud_.points), normals_(std::move(normals)) {
  if (normals_.size() != cloud_.points.size())
    throw std::invalid_argument("PlanarTarget: one normal per point required");
}

namespace {

struct LinearSystem {
  Matrix6d h = Matrix6d::Zero();
  Vector6d g = Vector6d::Zero();
  double cost = 0.0;
  std::size_t count = 0;
};

// Point-to-plane residual r = n . (T p - q) with the right-perturbation
// Jacobian row [ -n' R [p]x | n' R ].
LinearSystem build_system(std::span<const Eigen::Vector3d> source,
                          const PlanarTarget& target, const Pose& pose,
                          double max_corr_dist) {
  LinearSystem sys;
  KdTree::Neighbor nb;
  for (const auto& p : source) {
    const Eigen::Vector3d q = pose.apply(p);
    if (!target.tree().nearest(q, nb, max_corr_dist)) continue;
    const PointNormal& pn = target.normals()[nb.index];
    if (!pn.valid) continue;

    const double r = pn.normal.dot(q - target.tree().point(nb.index));
    Vector6d row;
    row.head<3>() = -(pn.normal.transpose() * pose.rotation * skew(p)).transpose();
    row.tail<3>() = pose.rotation.transpose() * pn.normal;
    sys.h += row * row.transpose();
    sys.g += row * r;
    sys.cost += r * r;
    ++sys.count;
  }
  return sys;
}

double cost_at(std::span<const Eigen::Vector3d> source, const PlanarTarget& target,
               const Pose& pose, double max_corr_dist) {
  double cost = 0.0;
  KdTree::Neighbor nb;
  for (const auto& p : source) {
    const Eigen::Vector3d q = pose.apply(p);
    if (!target.tree().nearest(q, nb, max_corr_dist)) continue;
    const PointNormal& pn = target.normals()[nb.index];
    if (!pn.valid) continue;
    const double r = pn.normal.dot(q - target.tree().point(nb.index));
    cost += r * r;
  }
  return cost;
}

}  // namespace

RegistrationResult icp_point_to_plane(std::span<const Eigen::Vector3d> source,
                                      const PlanarTarget& target,
                                      const Pose& init, const IcpConfig& config) {
  if (source.empty() || target.cloud().empty())
    throw std::invalid_argument("icp_point_to_plane: empty cloud");

  RegistrationResult result;
  result.transform = init;

  LinearSystem sys;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    sys = build_system(source, target, result.transform, config.max_corr_dist);
    if (sys.count < static_cast<std::size_t>(config.min_correspondences)) {
      result.degenerate = true;
      result.iterations = iter;
      return result;
    }
    result.objective_history.push_back(sys.cost);
    result.iterations = iter + 1;

    const Vector6d delta = sys.h.ldlt().solve(-sys.g);
    if (!delta.allFinite()) {
      result.degenerate = true;
      break;
    }

    // Backtrack on the current correspondence set until the step improves it.
    double alpha = 1.0;
    Pose stepped;
    bool accepted = false;
    for (int half = 0; half < 8; ++half, alpha *= 0.5) {
      stepped = compose(result.transform, se3_exp(alpha * delta));
      if (cost_at(source, target, stepped, config.max_corr_dist) <= sys.cost) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
    result.transform = stepped;
    if ((alpha * delta).squaredNorm() < config.tol) {
      result.converged = true;
      break;
    }
  }

  // Final system at the solution: covariance, condition, quality stats.
  sys = build_system(source, target, result.transform, config.max_corr_dist);
  if (sys.count < static_cast<std::size_t>(config.min_correspondences)) {
    result.degenerate = true;
    result.converged = false;
    return result;
  }
  result.fitness = static_cast<double>(sys.count) / source.size();
  result.rms = std::sqrt(sys.cost / sys.count);

  Eigen::SelfAdjointEigenSolver<Matrix6d> es(sys.h);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  result.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(result.condition <= config.max_condition)) {
    result.degenerate = true;
    return result;
  }
  result.covariance = symmetrized(config.noise_scale * sys.h.inverse());
  result.covariance_valid = true;
  return result;
}

}  // namespace msmap
