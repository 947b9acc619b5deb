#pragma once

#include <cstdint>
#include <string>

#include "udfforge/field.hpp"
#include "udfforge/surfel.hpp"

namespace udf {

enum class SceneKind { Plane, Disk, Sphere, ParallelSheets, CurvedSheet };

std::string to_string(SceneKind kind);
/// Accepts plane, disk (alias plane_disk), sphere, parallel_sheets,
/// curved_sheet.
SceneKind scene_kind_from_string(const std::string& name);

struct SceneOptions {
  double radius = 0.6;       // disk and sphere radius
  double half_extent = 0.8;  // half side of plane and sheet patches
  double half_gap = 0.25;    // parallel sheet offset from z = 0
  double sheet_radius = 1.0; // curvature radius of the curved sheet
  double sheet_half_angle = 0.6;
  double scale_min = 0.01;
  double scale_max = 0.05;
  std::size_t gt_samples = 50000;
};

/// Surfel cloud sampled from an analytic surface, with the exact oracle and
/// dense noise-free samples of the true surface.
struct SyntheticScene {
  SceneKind kind = SceneKind::Disk;
  SurfelCloud cloud;
  AnalyticField oracle = AnalyticField::plane();
  PointSet gt_samples;
};

SyntheticScene gen_scene(SceneKind kind, std::size_t n, double noise_sigma, std::uint64_t seed,
                         const SceneOptions& options = {});

/// The oracle a scene of this kind is generated against.
AnalyticField scene_oracle(SceneKind kind, const SceneOptions& options = {});

}  // namespace udf
