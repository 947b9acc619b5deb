#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "udfforge/types.hpp"

namespace udf {

/// A flat 2D Gaussian: the first two rotation columns span its plane and the
/// third is its normal.
struct Surfel {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Eigen::Vector2d scales{0.01, 0.01};
  double opacity = 1.0;
  std::optional<Vec3> color;

  Vec3 normal() const { return rotation.col(2); }
  double max_scale() const { return scales.maxCoeff(); }
};

struct SurfelCloud {
  std::vector<Surfel> surfels;
  SceneTransform transform;

  std::size_t size() const { return surfels.size(); }
  bool empty() const { return surfels.empty(); }
  PointSet centers() const;
};

/// Throws Error(InvalidArgument) naming `where` if the surfel breaks the
/// rotation, scale, opacity or color invariants.
void validate_surfel(const Surfel& s, const std::string& where);

/// Orthonormal frame whose third column is `normal`, rotated in-plane by
/// `angle` radians.
Mat3 frame_from_normal(const Vec3& normal, double angle = 0.0);

enum class CloudFormat { Text, Binary };

/// Reads either format (detected from the leading magic). Empty clouds are
/// rejected unless `allow_empty`.
SurfelCloud load_cloud(const std::string& path, bool allow_empty = true);
void save_cloud(const SurfelCloud& cloud, const std::string& path,
                CloudFormat format = CloudFormat::Text);

/// Maps the cloud into [-1,1]^3 when any center lies outside it, recording
/// the similarity transform. Clouds already inside keep the identity.
SurfelCloud normalize_cloud(const SurfelCloud& cloud);

/// Distance from each point to its k-th nearest other point.
std::vector<double> knn_distance(std::span<const Vec3> points, std::size_t k);
std::vector<double> knn_distance(const SurfelCloud& cloud, std::size_t k);

/// Plain point-set files: one "x y z" triple per line, '#' comments.
PointSet load_points(const std::string& path);
void save_points(const PointSet& points, const std::string& path);

}  // namespace udf
