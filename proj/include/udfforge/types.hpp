#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace udf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointSet = std::vector<Vec3>;

/// Axis-aligned box in scene units.
struct BBox {
  Vec3 lo{-1.0, -1.0, -1.0};
  Vec3 hi{1.0, 1.0, 1.0};

  Vec3 extent() const { return hi - lo; }
};

/// Lattice point counts per axis.
struct Resolution {
  int nx = 2;
  int ny = 2;
  int nz = 2;

  static Resolution cubic(int n) { return {n, n, n}; }
  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
};

/// Similarity transform from raw input coordinates into the working cube:
/// normalized = scale * raw + translation.
struct SceneTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& raw) const { return scale * raw + translation; }
  Vec3 invert(const Vec3& normalized) const { return (normalized - translation) / scale; }
  bool is_identity() const { return scale == 1.0 && translation.isZero(0.0); }
};

inline bool all_finite(const Vec3& p) { return p.allFinite(); }

}  // namespace udf
