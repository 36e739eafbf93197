#include "msmap/voxel_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace msmap {

VoxelKey voxel_key(const Eigen::Vector3d& point, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(point.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(point.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(point.z() / voxel_size))};
}

VoxelMap::VoxelMap(double voxel_size, double map_radius)
    : voxel_size_(voxel_size), map_radius_(map_radius) {
  if (voxel_size <= 0.0) throw std::invalid_argument("voxel_size must be > 0");
}

std::vector<VoxelKey> VoxelMap::insert(std::span<const Eigen::Vector3d> points) {
  std::vector<VoxelKey> touched;
  touched.reserve(points.size() / 8 + 1);
  for (const auto& p : points) {
    const VoxelKey key = voxel_key(p, voxel_size_);
    cells_[key].add(p);
    touched.push_back(key);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  return touched;
}

std::vector<VoxelKey> VoxelMap::keys_of(
    std::span<const Eigen::Vector3d> points) const {
  std::vector<VoxelKey> keys;
  keys.reserve(points.size() / 8 + 1);
  for (const auto& p : points) keys.push_back(voxel_key(p, voxel_size_));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

VoxelSnapshot VoxelMap::snapshot(std::span<const VoxelKey> keys) const {
  VoxelSnapshot snap;
  for (const auto& key : keys) {
    auto it = cells_.find(key);
    if (it != cells_.end()) snap.emplace(key, it->second);
  }
  return snap;
}

const VoxelStats* VoxelMap::find(const VoxelKey& key) const {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

Eigen::Vector3d VoxelMap::voxel_center(const VoxelKey& key) const {
  return {(key.i + 0.5) * voxel_size_, (key.j + 0.5) * voxel_size_,
          (key.k + 0.5) * voxel_size_};
}

std::size_t VoxelMap::prune(const Eigen::Vector3d& center) {
  std::size_t removed = 0;
  for (auto it = cells_.begin(); it != cells_.end();) {
    if ((voxel_center(it->first) - center).norm() > map_radius_) {
      it = cells_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

void VoxelMap::dump(std::ostream& out) const {
  std::vector<VoxelKey> keys;
  keys.reserve(cells_.size());
  for (const auto& [key, stats] : cells_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  char buf[64];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out << buf;
  };
  for (const auto& key : keys) {
    const VoxelStats& s = cells_.at(key);
    out << key.i << ' ' << key.j << ' ' << key.k << ' ' << s.count();
    const Eigen::Vector3d mu = s.mean();
    put(mu.x());
    put(mu.y());
    put(mu.z());
    const Eigen::Matrix3d cov =
        s.count() >= 2 ? s.covariance() : Eigen::Matrix3d::Zero();
    put(cov(0, 0));
    put(cov(0, 1));
    put(cov(0, 2));
    put(cov(1, 1));
    put(cov(1, 2));
    put(cov(2, 2));
    out << '\n';
  }
}

namespace {

Eigen::Matrix3d psd_sqrt3(const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Eigen::Vector3d d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double gaussian_w2(const Eigen::Vector3d& mu1, const Eigen::Matrix3d& sigma1,
                   const Eigen::Vector3d& mu2, const Eigen::Matrix3d& sigma2) {
  constexpr double kSymTol = 1e-6;
  if ((sigma1 - sigma1.transpose()).cwiseAbs().maxCoeff() > kSymTol ||
      (sigma2 - sigma2.transpose()).cwiseAbs().maxCoeff() > kSymTol) {
    throw std::invalid_argument("gaussian_w2: covariance not symmetric");
  }
  // The trace term tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2) equals the squared
  // Bures distance min_U |S1^1/2 - S2^1/2 U|_F^2 over orthogonal U. Computing
  // it in that form avoids the cancellation of two O(1) traces, which the
  // outer square root would otherwise blow up to ~sqrt(eps).
  const Eigen::Matrix3d root1 = psd_sqrt3(0.5 * (sigma1 + sigma1.transpose()));
  const Eigen::Matrix3d root2 = psd_sqrt3(0.5 * (sigma2 + sigma2.transpose()));
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(root2 * root1,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d align = svd.matrixU() * svd.matrixV().transpose();
  const double bures = (root1 - root2 * align).norm();
  return std::sqrt((mu1 - mu2).squaredNorm() + bures * bures);
}

std::vector<Eigen::Vector3d> voxel_downsample(
    std::span<const Eigen::Vector3d> points, double leaf) {
  if (leaf <= 0.0) throw std::invalid_argument("voxel_downsample: leaf must be > 0");
  std::unordered_map<VoxelKey, std::pair<Eigen::Vector3d, int>, VoxelKeyHash> bins;
  for (const auto& p : points) {
    auto& [sum, n] = bins[voxel_key(p, leaf)];
    if (n == 0) sum.setZero();
    sum += p;
    ++n;
  }
  std::vector<VoxelKey> keys;
  keys.reserve(bins.size());
  for (const auto& [key, acc] : bins) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  std::vector<Eigen::Vector3d> out;
  out.reserve(keys.size());
  for (const auto& key : keys) {
    const auto& [sum, n] = bins.at(key);
    out.push_back(sum / n);
  }
  return out;
}

double map_w2(const VoxelSnapshot& before, const VoxelMap& after,
              std::span<const VoxelKey> touched, const MapW2Options& options) {
  double weighted_sum = 0.0;
  double weight_total = 0.0;
  for (const auto& key : touched) {
    const auto prev = before.find(key);
    if (prev == before.end() || prev->second.count() < options.min_points)
      continue;
    const VoxelStats* cur = after.find(key);
    if (cur == nullptr || cur->count() < options.min_points) continue;
    const double d = gaussian_w2(prev->second.mean(), prev->second.covariance(),
                                 cur->mean(), cur->covariance());
    const double w = options.count_weighted ? cur->count() : 1.0;
    weighted_sum += w * d;
    weight_total += w;
  }
  return weight_total > 0.0 ? weighted_sum / weight_total : 0.0;
}

}  // namespace msmap
