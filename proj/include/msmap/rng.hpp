#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace msmap {

// Counter-based generator: every draw is a pure hash of (seed, stream,
// counter, kind). No hidden state, so output is independent of call order
// and identical across platforms.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter,
                     std::uint64_t kind = 0) const {
    return mix(mix(mix(seed_ ^ kGolden, stream), counter), kind);
  }

  /// Uniform double in [0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter,
                 std::uint64_t kind = 0) const {
    return static_cast<double>(bits(stream, counter, kind) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on two independent hashes.
  double normal(std::uint64_t stream, std::uint64_t counter,
                std::uint64_t kind = 0) const {
    const double u1 = 1.0 - uniform(stream, counter, kind * 2 + 1);  // (0, 1]
    const double u2 = uniform(stream, counter, kind * 2 + 2);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Eigen::Vector3d normal3(std::uint64_t stream, std::uint64_t counter) const {
    return {normal(stream, counter, 10), normal(stream, counter, 11),
            normal(stream, counter, 12)};
  }

  Eigen::Matrix<double, 6, 1> normal6(std::uint64_t stream,
                                      std::uint64_t counter) const {
    Eigen::Matrix<double, 6, 1> v;
    for (int i = 0; i < 6; ++i) v[i] = normal(stream, counter, 20 + i);
    return v;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    std::uint64_t x = h ^ (v + kGolden + (h << 6) + (h >> 2));
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
};

}  // namespace msmap
