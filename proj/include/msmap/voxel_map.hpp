#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

// Voxelized Gaussian-mixture map. Each voxel keeps exact sufficient
// statistics (count, sum, sum of outer products), so incremental insertion
// reproduces batch mean/covariance bit-for-bit up to rounding.

namespace msmap {

struct VoxelKey {
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t k = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& key) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : {key.i, key.j, key.k}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Component-wise floor(p / voxel_size).
VoxelKey voxel_key(const Eigen::Vector3d& point, double voxel_size);

class VoxelStats {
 public:
  void add(const Eigen::Vector3d& p) {
    ++count_;
    sum_ += p;
    sum_outer_ += p * p.transpose();
  }

  int count() const { return count_; }
  const Eigen::Vector3d& sum() const { return sum_; }
  const Eigen::Matrix3d& sum_outer() const { return sum_outer_; }

  Eigen::Vector3d mean() const { return sum_ / count_; }

  /// Sample covariance with the n-1 denominator; defined for count >= 2.
  Eigen::Matrix3d covariance() const {
    const Eigen::Vector3d mu = mean();
    const Eigen::Matrix3d c =
        (sum_outer_ - count_ * (mu * mu.transpose())) / (count_ - 1);
    return 0.5 * (c + c.transpose());
  }

 private:
  int count_ = 0;
  Eigen::Vector3d sum_ = Eigen::Vector3d::Zero();
  Eigen::Matrix3d sum_outer_ = Eigen::Matrix3d::Zero();
};

using VoxelSnapshot = std::map<VoxelKey, VoxelStats>;

class VoxelMap {
 public:
  VoxelMap(double voxel_size, double map_radius);

  /// Updates per-voxel statistics point by point; returns the sorted unique
  /// set of voxels whose statistics changed.
  std::vector<VoxelKey> insert(std::span<const Eigen::Vector3d> points);

  /// Sorted unique keys the given points would fall into (no mutation).
  std::vector<VoxelKey> keys_of(std::span<const Eigen::Vector3d> points) const;

  /// Copies current stats of the listed voxels (missing ones are skipped).
  VoxelSnapshot snapshot(std::span<const VoxelKey> keys) const;

  const VoxelStats* find(const VoxelKey& key) const;

  /// Removes voxels whose center is farther than map_radius from center.
  std::size_t prune(const Eigen::Vector3d& center);

  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  double voxel_size() const { return voxel_size_; }
  double map_radius() const { return map_radius_; }

  Eigen::Vector3d voxel_center(const VoxelKey& key) const;

  const std::unordered_map<VoxelKey, VoxelStats, VoxelKeyHash>& cells() const {
    return cells_;
  }

  /// Line-oriented debug dump, sorted by key:
  /// i j k n mu_x mu_y mu_z s_xx s_xy s_xz s_yy s_yz s_zz
  void dump(std::ostream& out) const;

 private:
  double voxel_size_;
  double map_radius_;
  std::unordered_map<VoxelKey, VoxelStats, VoxelKeyHash> cells_;
};

/// L2 Wasserstein distance between two Gaussians:
///   sqrt(|mu1-mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)).
/// Matrix square roots use symmetric eigendecomposition with eigenvalues
/// clamped at zero; the trace argument is clamped at zero as well.
/// Throws std::invalid_argument when either covariance has asymmetry > 1e-6.
double gaussian_w2(const Eigen::Vector3d& mu1, const Eigen::Matrix3d& sigma1,
                   const Eigen::Vector3d& mu2, const Eigen::Matrix3d& sigma2);

struct MapW2Options {
  // A voxel pair is eligible only if the voxel existed before the update
  // with at least min_points and still has at least min_points after it.
  int min_points = 6;
  // Weight each pair by its current point count instead of the plain mean.
  bool count_weighted = false;
};

/// Average Wasserstein distance over eligible (before, after) voxel pairs.
/// Returns 0 when nothing is eligible.
double map_w2(const VoxelSnapshot& before, const VoxelMap& after,
              std::span<const VoxelKey> touched,
              const MapW2Options& options = {});

/// One centroid per occupied voxel, in deterministic (sorted key) order.
std::vector<Eigen::Vector3d> voxel_downsample(
    std::span<const Eigen::Vector3d> points, double leaf);

}  // namespace msmap
