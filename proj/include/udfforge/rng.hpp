#pragma once

#include <cstdint>
#include <random>

#include "udfforge/types.hpp"

namespace udf {

/// Seeded random source used by every sampler. Copyable so a stream can be
/// forked for an independent batch.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return normal_(engine_); }
  Vec3 normal3() {
    const double x = normal();
    const double y = normal();
    const double z = normal();
    return {x, y, z};
  }
  Vec3 uniform_in(const BBox& box) {
    const double x = uniform(box.lo.x(), box.hi.x());
    const double y = uniform(box.lo.y(), box.hi.y());
    const double z = uniform(box.lo.z(), box.hi.z());
    return {x, y, z};
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace udf
