#include "msmap/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace msmap {

void validate_trajectory(const Trajectory& trajectory) {
  for (std::size_t i = 1; i < trajectory.size(); ++i)
    if (trajectory[i].t <= trajectory[i - 1].t)
      throw std::invalid_argument("trajectory timestamps must strictly increase");
}

namespace {

// Nearest-timestamp association within tolerance.
std::vector<std::pair<std::size_t, std::size_t>> associate(
    const Trajectory& estimated, const Trajectory& truth, double tol) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t j = 0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const double t = estimated[i].t;
    while (j + 1 < truth.size() &&
           std::abs(truth[j + 1].t - t) <= std::abs(truth[j].t - t))
      ++j;
    if (!truth.empty() && std::abs(truth[j].t - t) <= tol) pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace

double ate(const Trajectory& estimated, const Trajectory& truth,
           const MetricConfig& config) {
  validate_trajectory(estimated);
  validate_trajectory(truth);
  const auto pairs = associate(estimated, truth, config.assoc_tol);
  if (pairs.size() < 2)
    throw std::runtime_error("ate: fewer than two associated pose pairs");

  Eigen::MatrixXd src(3, pairs.size());
  Eigen::MatrixXd dst(3, pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    src.col(k) = estimated[pairs[k].first].pose.translation;
    dst.col(k) = truth[pairs[k].second].pose.translation;
  }

  Eigen::Matrix4d align = Eigen::Matrix4d::Identity();
  if (config.ate_align) align = Eigen::umeyama(src, dst, false);

  double sq_sum = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Eigen::Vector3d aligned =
        align.topLeftCorner<3, 3>() * src.col(k) + align.topRightCorner<3, 1>();
    sq_sum += (aligned - dst.col(k)).squaredNorm();
  }
  return std::sqrt(sq_sum / pairs.size());
}

AccuracyResult accuracy(const PointCloud& estimate, const PointCloud& truth,
                        const MetricConfig& config) {
  if (estimate.empty() || truth.empty())
    throw std::invalid_argument("accuracy: empty cloud");
  if (config.inlier_thresh > config.knn_dist)
    throw std::invalid_argument("accuracy: inlier threshold exceeds knn distance");

  const KdTree tree(truth.points);
  KdTree::Neighbor nb;
  double sq_sum = 0.0;
  std::size_t inliers = 0;
  for (const auto& p : estimate.points) {
    if (!tree.nearest(p, nb, config.knn_dist)) continue;
    if (nb.squared_distance < config.inlier_thresh * config.inlier_thresh) {
      sq_sum += nb.squared_distance;
      ++inliers;
    }
  }
  if (inliers == 0) throw NoInliersError("accuracy: no inlier point pairs");
  return {std::sqrt(sq_sum / inliers),
          static_cast<double>(inliers) / estimate.size()};
}

double chamfer(const PointCloud& p, const PointCloud& q) {
  if (p.empty() || q.empty())
    throw std::invalid_argument("chamfer: empty cloud");
  const auto one_way = [](const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to.points);
    KdTree::Neighbor nb;
    double sum = 0.0;
    for (const auto& pt : from.points) {
      tree.nearest(pt, nb);
      sum += std::sqrt(nb.squared_distance);
    }
    return sum / from.size();
  };
  return one_way(p, q) + one_way(q, p);
}

MmeResult mme(const PointCloud& cloud, const MetricConfig& config) {
  if (cloud.empty()) throw std::invalid_argument("mme: empty cloud");

  const KdTree tree(cloud.points);
  double entropy_sum = 0.0;
  std::size_t valid = 0;
  for (const auto& p : cloud.points) {
    const auto nbrs = tree.radius(p, config.mme_radius);
    if (nbrs.size() < static_cast<std::size_t>(config.mme_min_neighbors))
      continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t idx : nbrs) mean += tree.point(idx);
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t idx : nbrs) {
      const Eigen::Vector3d d = tree.point(idx) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size() - 1);

    const double det = cov.determinant();
    if (det < config.mme_det_floor) continue;
    entropy_sum += 0.5 * std::log(std::pow(2.0 * M_PI * M_E, 3) * det);
    ++valid;
  }
  if (valid == 0)
    throw std::runtime_error("mme: no point has a valid neighborhood");
  return {entropy_sum / valid, static_cast<double>(valid) / cloud.size()};
}

}  // namespace msmap
