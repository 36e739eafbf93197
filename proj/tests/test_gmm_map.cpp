#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "msmap/rng.hpp"
#include "msmap/voxel_map.hpp"
#include "test_util.hpp"

using namespace msmap;
using namespace msmap::testutil;

namespace {

// Batch mean/covariance straight from the definition, per voxel.
struct BatchStats {
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
  int n;
};

std::map<VoxelKey, BatchStats> batch_oracle(
    const std::vector<Eigen::Vector3d>& points, double voxel_size) {
  std::map<VoxelKey, std::vector<Eigen::Vector3d>> bins;
  for (const auto& p : points) bins[voxel_key(p, voxel_size)].push_back(p);

  std::map<VoxelKey, BatchStats> out;
  for (const auto& [key, pts] : bins) {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    for (const auto& p : pts) mu += p;
    mu /= pts.size();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    if (pts.size() >= 2) {
      for (const auto& p : pts) cov += (p - mu) * (p - mu).transpose();
      cov /= (pts.size() - 1.0);
    }
    out[key] = {mu, cov, static_cast<int>(pts.size())};
  }
  return out;
}

std::vector<Eigen::Vector3d> random_cloud(const CounterRng& rng,
                                          std::uint64_t stream, int n,
                                          double extent) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(extent * (rng.uniform(stream, i, 1) - 0.5),
                     extent * (rng.uniform(stream, i, 2) - 0.5),
                     extent * (rng.uniform(stream, i, 3) - 0.5));
  }
  return pts;
}

}  // namespace

TEST_CASE("voxel_key floor arithmetic") {
  CHECK(voxel_key({3.1, -0.2, 4.0}, 2.0) == VoxelKey{1, -1, 2});
  CHECK(voxel_key({0.0, 0.0, 0.0}, 0.7) == VoxelKey{0, 0, 0});
  CHECK(voxel_key({-4.0, -4.0, -4.0}, 2.0) == VoxelKey{-2, -2, -2});
}

TEST_CASE("two-point insertion statistics") {
  const double eps = 0.01;
  VoxelMap map(1.0, 100.0);
  const std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {2 * eps, 0, 0}};
  const auto touched = map.insert(pts);
  REQUIRE(touched.size() == 1);
  const VoxelStats* s = map.find(touched.front());
  REQUIRE(s != nullptr);
  CHECK(s->count() == 2);
  CHECK((s->mean() - Eigen::Vector3d(eps, 0, 0)).norm() < 1e-15);
  CHECK(s->covariance()(0, 0) == doctest::Approx(2 * eps * eps).epsilon(1e-12));
}

TEST_CASE("incremental insertion equals batch statistics") {
  CounterRng rng(21);
  const auto cloud = random_cloud(rng, 1, 1000, 20.0);

  VoxelMap map(2.0, 1000.0);
  // Insert in uneven chunks to exercise the incremental path.
  std::size_t offset = 0;
  for (std::size_t chunk : {7u, 313u, 1u, 400u, 279u}) {
    map.insert(std::span(cloud).subspan(offset, chunk));
    offset += chunk;
  }
  REQUIRE(offset == cloud.size());

  const auto oracle = batch_oracle(cloud, 2.0);
  CHECK(map.size() == oracle.size());
  for (const auto& [key, ref] : oracle) {
    const VoxelStats* s = map.find(key);
    REQUIRE(s != nullptr);
    CHECK(s->count() == ref.n);
    CHECK((s->mean() - ref.mean).cwiseAbs().maxCoeff() < 1e-9);
    if (ref.n >= 2)
      CHECK((s->covariance() - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("empty insertion changes nothing") {
  VoxelMap map(1.0, 10.0);
  map.insert(std::vector<Eigen::Vector3d>{{0.5, 0.5, 0.5}});
  const auto touched = map.insert(std::vector<Eigen::Vector3d>{});
  CHECK(touched.empty());
  CHECK(map.size() == 1);
}

TEST_CASE("gaussian_w2 closed forms") {
  const Eigen::Matrix3d id = Eigen::Matrix3d::Identity();
  CHECK(gaussian_w2({1, 2, 3}, id, {1, 2, 3}, id) == doctest::Approx(0.0));
  CHECK(gaussian_w2({0, 0, 0}, id, {3, 4, 0}, id) == doctest::Approx(5.0).epsilon(1e-12));
  // Commuting diagonals: trace term is sum (sqrt(l1) - sqrt(l2))^2.
  CHECK(gaussian_w2({0, 0, 0}, id, {0, 0, 0}, 4.0 * id) ==
        doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("gaussian_w2 rejects asymmetric input") {
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 1) = 0.1;
  CHECK_THROWS_AS(
      (void)gaussian_w2({0, 0, 0}, bad, {0, 0, 0}, Eigen::Matrix3d::Identity()),
      std::invalid_argument);
}

TEST_CASE("gaussian_w2 metric properties on random PSD triples") {
  CounterRng rng(22);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Matrix3d a = random_psd3(rng, 2, 3 * i);
    const Eigen::Matrix3d b = random_psd3(rng, 2, 3 * i + 1);
    const Eigen::Matrix3d c = random_psd3(rng, 2, 3 * i + 2);
    const Eigen::Vector3d ma = rng.normal3(3, 3 * i);
    const Eigen::Vector3d mb = rng.normal3(3, 3 * i + 1);
    const Eigen::Vector3d mc = rng.normal3(3, 3 * i + 2);

    CHECK(gaussian_w2(ma, a, ma, a) < 1e-9);
    CHECK(std::abs(gaussian_w2(ma, a, mb, b) - gaussian_w2(mb, b, ma, a)) <
          1e-9);
    CHECK(gaussian_w2(ma, a, mc, c) <=
          gaussian_w2(ma, a, mb, b) + gaussian_w2(mb, b, mc, c) + 1e-8);
  }
}

TEST_CASE("map_w2 is zero for identical per-pair Gaussians") {
  CounterRng rng(23);
  const auto cloud = random_cloud(rng, 4, 500, 6.0);
  VoxelMap map(2.0, 100.0);
  const auto touched = map.insert(cloud);
  const auto snap = map.snapshot(touched);
  CHECK(map_w2(snap, map, touched) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("map_w2 with one eligible pair equals gaussian_w2") {
  CounterRng rng(24);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 20; ++i)
    pts.push_back(Eigen::Vector3d(0.5, 0.5, 0.5) + 0.3 * rng.normal3(5, i));

  VoxelMap map(10.0, 100.0);
  auto touched = map.insert(pts);
  REQUIRE(touched.size() == 1);
  const auto snap = map.snapshot(touched);
  const VoxelStats before = snap.begin()->second;

  std::vector<Eigen::Vector3d> more;
  for (int i = 0; i < 20; ++i)
    more.push_back(Eigen::Vector3d(1.5, 0.5, 0.5) + 0.2 * rng.normal3(6, i));
  touched = map.insert(more);

  const VoxelStats* after = map.find(touched.front());
  const double expected = gaussian_w2(before.mean(), before.covariance(),
                                      after->mean(), after->covariance());
  CHECK(map_w2(snap, map, touched) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("map_w2 synthetic shift equals displacement times shifted fraction") {
  CounterRng rng(25);
  // Four populated voxels; shift the contents of two of them by d.
  const double d = 0.25;
  std::vector<Eigen::Vector3d> base;
  for (int v = 0; v < 4; ++v)
    for (int i = 0; i < 50; ++i) {
      Eigen::Vector3d p = 0.2 * rng.normal3(7, v * 50 + i);
      p += Eigen::Vector3d(4.0 * v + 2.0, 2.0, 2.0);  // voxel centers, size 4
      base.push_back(p);
    }

  VoxelMap map_before(4.0, 1000.0);
  const auto keys = map_before.insert(base);
  REQUIRE(keys.size() == 4);
  const auto snap = map_before.snapshot(keys);

  std::vector<Eigen::Vector3d> shifted = base;
  for (std::size_t i = 0; i < 100; ++i) shifted[i].z() += d;  // first 2 voxels
  VoxelMap map_after(4.0, 1000.0);
  const auto keys_after = map_after.insert(shifted);
  REQUIRE(keys_after == keys);

  // Covariances are unchanged by a pure translation, so each shifted pair
  // contributes exactly d and each unshifted pair exactly 0.
  CHECK(map_w2(snap, map_after, keys) == doctest::Approx(0.5 * d).epsilon(1e-9));
}

TEST_CASE("map_w2 skips newly created and sparse voxels") {
  VoxelMap map(1.0, 100.0);
  std::vector<Eigen::Vector3d> sparse = {{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}};
  auto touched = map.insert(sparse);
  auto snap = map.snapshot(touched);
  // Below min_points in the before map: nothing eligible.
  touched = map.insert(sparse);
  CHECK(map_w2(snap, map, touched) == 0.0);
}

TEST_CASE("prune removes only voxels beyond the radius") {
  CounterRng rng(26);
  VoxelMap map(1.0, 5.0);
  const auto cloud = random_cloud(rng, 8, 2000, 30.0);
  map.insert(cloud);

  // Snapshot survivors-to-be, then check they are untouched by prune.
  std::vector<VoxelKey> all;
  for (const auto& [key, stats] : map.cells()) all.push_back(key);
  const auto before = map.snapshot(all);

  const Eigen::Vector3d center(0, 0, 0);
  const std::size_t removed = map.prune(center);
  CHECK(removed > 0);
  CHECK(map.size() + removed == before.size());
  for (const auto& [key, stats] : map.cells()) {
    CHECK((map.voxel_center(key) - center).norm() <= 5.0);
    const auto& prev = before.at(key);
    CHECK(prev.count() == stats.count());
    CHECK((prev.sum() - stats.sum()).norm() == 0.0);
  }

  CHECK(map.prune(center) == 0);  // everything left is inside
}

TEST_CASE("prune removes a single far voxel") {
  VoxelMap map(2.0, 6.0);
  map.insert(std::vector<Eigen::Vector3d>{{9.0, 0.0, 0.0}});
  CHECK(map.prune({0, 0, 0}) == 1);
  CHECK(map.empty());
}

TEST_CASE("dump is line oriented and sorted") {
  VoxelMap map(1.0, 10.0);
  map.insert(std::vector<Eigen::Vector3d>{{1.5, 0.5, 0.5}, {0.5, 0.5, 0.5},
                                          {0.6, 0.5, 0.5}});
  std::ostringstream os;
  map.dump(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line.substr(0, 8) == "0 0 0 2 ");
  std::getline(is, line);
  CHECK(line.substr(0, 8) == "1 0 0 1 ");
}
