#include "udfforge/scene.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "udfforge/error.hpp"
#include "udfforge/rng.hpp"

namespace udf {

namespace {

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;
};

SurfacePoint sample_surface(SceneKind kind, const SceneOptions& o, Rng& rng) {
  switch (kind) {
    case SceneKind::Plane: {
      const double x = rng.uniform(-o.half_extent, o.half_extent);
      const double y = rng.uniform(-o.half_extent, o.half_extent);
      return {{x, y, 0.0}, Vec3::UnitZ()};
    }
    case SceneKind::Disk: {
      const double r = o.radius * std::sqrt(rng.uniform(0.0, 1.0));
      const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
      return {{r * std::cos(t), r * std::sin(t), 0.0}, Vec3::UnitZ()};
    }
    case SceneKind::Sphere: {
      Vec3 d = rng.normal3();
      while (d.norm() < 1e-12) d = rng.normal3();
      d.normalize();
      return {o.radius * d, d};
    }
    case SceneKind::ParallelSheets: {
      const double x = rng.uniform(-o.half_extent, o.half_extent);
      const double y = rng.uniform(-o.half_extent, o.half_extent);
      const double z = rng.uniform(0.0, 1.0) < 0.5 ? -o.half_gap : o.half_gap;
      return {{x, y, z}, Vec3::UnitZ()};
    }
    case SceneKind::CurvedSheet: {
      const double t = rng.uniform(-o.sheet_half_angle, o.sheet_half_angle);
      const double y = rng.uniform(-o.half_extent, o.half_extent);
      const Vec3 n(std::sin(t), 0.0, std::cos(t));
      const Vec3 axis(0.0, 0.0, -o.sheet_radius);
      return {axis + o.sheet_radius * n + Vec3(0.0, y, 0.0), n};
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown scene kind");
}

}  // namespace

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::Plane: return "plane";
    case SceneKind::Disk: return "disk";
    case SceneKind::Sphere: return "sphere";
    case SceneKind::ParallelSheets: return "parallel_sheets";
    case SceneKind::CurvedSheet: return "curved_sheet";
  }
  return "unknown";
}

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "plane") return SceneKind::Plane;
  if (name == "disk" || name == "plane_disk") return SceneKind::Disk;
  if (name == "sphere") return SceneKind::Sphere;
  if (name == "parallel_sheets") return SceneKind::ParallelSheets;
  if (name == "curved_sheet") return SceneKind::CurvedSheet;
  fail(ErrorCode::InvalidArgument, "unknown scene kind '" + name + "'");
}

AnalyticField scene_oracle(SceneKind kind, const SceneOptions& o) {
  switch (kind) {
    case SceneKind::Plane: return AnalyticField::plane(Vec3::UnitZ(), 0.0);
    case SceneKind::Disk: return AnalyticField::disk(Vec3::Zero(), Vec3::UnitZ(), o.radius);
    case SceneKind::Sphere: return AnalyticField::sphere(Vec3::Zero(), o.radius);
    case SceneKind::ParallelSheets: return AnalyticField::parallel_planes(Vec3::UnitZ(), o.half_gap);
    case SceneKind::CurvedSheet:
      return AnalyticField::cylinder_patch(Vec3(0.0, 0.0, -o.sheet_radius), o.sheet_radius,
                                           o.sheet_half_angle, o.half_extent);
  }
  fail(ErrorCode::InvalidArgument, "unknown scene kind");
}

SyntheticScene gen_scene(SceneKind kind, std::size_t n, double noise_sigma, std::uint64_t seed,
                         const SceneOptions& options) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "gen_scene: n must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    fail(ErrorCode::InvalidArgument, "gen_scene: noise_sigma must be finite and >= 0");
  }
  if (!(options.scale_min > 0.0) || options.scale_max < options.scale_min) {
    fail(ErrorCode::InvalidArgument, "gen_scene: invalid scale range");
  }

  SyntheticScene scene;
  scene.kind = kind;
  scene.oracle = scene_oracle(kind, options);

  Rng rng(seed);
  scene.cloud.surfels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SurfacePoint sp = sample_surface(kind, options, rng);
    Surfel s;
    s.rotation = frame_from_normal(sp.normal, rng.uniform(0.0, 2.0 * std::numbers::pi));
    s.scales = {rng.uniform(options.scale_min, options.scale_max),
                rng.uniform(options.scale_min, options.scale_max)};
    s.center = sp.point;
    if (noise_sigma > 0.0) {
      // Truncated at 4 sigma so every center stays within 4 sigma of the surface.
      Vec3 e = rng.normal3();
      while (e.norm() > 4.0) e = rng.normal3();
      s.center += noise_sigma * e;
    }
    scene.cloud.surfels.push_back(s);
  }

  // Ground-truth samples come from an independent stream so their count does
  // not perturb the cloud.
  Rng gt_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  scene.gt_samples.reserve(options.gt_samples);
  for (std::size_t i = 0; i < options.gt_samples; ++i) {
    scene.gt_samples.push_back(sample_surface(kind, options, gt_rng).point);
  }
  return scene;
}

}  // namespace udf
