#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "udfforge/field.hpp"
#include "udfforge/rng.hpp"
#include "udfforge/types.hpp"

namespace udf {

/// Field samples on a lattice that includes both bbox corners. Values are
/// stored x-major: index = (i * ny + j) * nz + k.
struct Grid {
  BBox bbox;
  Resolution resolution;
  std::vector<double> values;

  Vec3 point(int i, int j, int k) const;
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(resolution.ny) +
            static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(resolution.nz) +
           static_cast<std::size_t>(k);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 cell_size() const;
};

using Edge = std::array<std::uint32_t, 2>;  // (lo, hi) vertex indices
using Triangle = std::array<std::uint32_t, 3>;

struct Mesh {
  PointSet vertices;
  std::vector<Triangle> triangles;
  std::vector<Edge> boundary_edges;

  /// Edges used by exactly one triangle, sorted.
  static std::vector<Edge> compute_boundary_edges(const std::vector<Triangle>& triangles);
};

struct ExtractionStats {
  std::size_t crossing_edges = 0;
  std::size_t active_cubes = 0;
  std::size_t inconsistent_cubes = 0;  // skipped
  std::size_t degenerate_triangles = 0;
};

struct ExtractedMesh {
  Mesh mesh;
  ExtractionStats stats;
  std::string diagnostic;  // non-empty when nothing was extracted
};

struct DeformationTrace {
  std::vector<PointSet> steps;        // configured steps + 1, input first
  std::vector<double> mean_residual;  // mean f per entry of `steps`
};

struct SurfacePoints {
  PointSet points;
  std::size_t candidates = 0;
  double kept_fraction = 0.0;
};

/// Iterated partial pulls p <- p - fraction f(p) grad f / |grad f|. Points
/// with a degenerate gradient stay put for that step.
DeformationTrace deform_cloud(const Field& field, const PointSet& points, int steps,
                              double step_fraction, double eps = 1e-8);

Grid eval_grid(const Field& field, const BBox& bbox, const Resolution& resolution);

/// Pulls n uniform points from `bbox` (10 steps of fraction 0.5) and keeps
/// the non-degenerate ones whose final residual is below the threshold.
SurfacePoints extract_surface_points(const Field& field, std::size_t n, double residual_threshold,
                                     Rng& rng, const BBox& bbox = {});

/// Repeats extract_surface_points in batches until `target` points are kept
/// or `max_candidates` have been tried. The result is truncated to `target`.
SurfacePoints collect_surface_points(const Field& field, std::size_t target, double residual_threshold,
                                     Rng& rng, const BBox& bbox = {},
                                     std::size_t max_candidates = 0);

/// Default iso band: two cell diagonals.
double default_iso_band(const BBox& bbox, const Resolution& resolution);

/// Open-surface extraction from an unsigned field. A lattice edge crosses the
/// surface when the corner gradients point in opposite directions and the
/// smaller corner value is inside the band. Each cube's corners are two-coloured
/// from its crossing edges (inconsistent cubes are skipped), and the pseudo
/// signs are polygonised on a conforming six-tetrahedron split of every cube.
ExtractedMesh extract_mesh(const Field& field, const BBox& bbox, const Resolution& resolution,
                           double iso_band);

struct BoundaryLoop {
  std::vector<std::uint32_t> vertices;  // walk order
  std::vector<Edge> edges;
  bool closed = false;
};

/// Connected components of the boundary edge graph.
std::vector<BoundaryLoop> mesh_boundary_loops(const Mesh& mesh);

// Export ---------------------------------------------------------------------

/// Raw little-endian float32 volume plus a JSON sidecar.
void save_grid(const Grid& grid, const std::string& raw_path, const std::string& sidecar_path);
void save_obj(const Mesh& mesh, const std::string& path);
/// Boundary loops as OBJ line elements over the same vertex list.
void save_boundary_obj(const Mesh& mesh, const std::vector<BoundaryLoop>& loops, const std::string& path);

}  // namespace udf
