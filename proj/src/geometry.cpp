#include "udfforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include <Eigen/Geometry>

#include "json.hpp"
#include "udfforge/binary_io.hpp"
#include "udfforge/error.hpp"
#include "udfforge/parallel.hpp"

namespace udf {

namespace {

constexpr std::size_t kBlock = 1024;

struct Sample {
  std::vector<double> values;
  std::vector<Vec3> grads;
};

Sample eval_points_with_grad(const Field& field, const PointSet& points) {
  Sample s;
  s.values.resize(points.size());
  s.grads.resize(points.size());
  parallel_for(points.size(), kBlock, [&](std::size_t begin, std::size_t end) {
    field.eval_with_grad_batch(std::span<const Vec3>(points).subspan(begin, end - begin),
                               std::span<double>(s.values).subspan(begin, end - begin),
                               std::span<Vec3>(s.grads).subspan(begin, end - begin));
  });
  return s;
}

std::vector<double> eval_points(const Field& field, const PointSet& points) {
  std::vector<double> values(points.size());
  parallel_for(points.size(), kBlock, [&](std::size_t begin, std::size_t end) {
    field.eval_batch(std::span<const Vec3>(points).subspan(begin, end - begin),
                     std::span<double>(values).subspan(begin, end - begin));
  });
  return values;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (const double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

void validate_lattice(const BBox& bbox, const Resolution& res, int min_res, const char* what) {
  if (res.nx < min_res || res.ny < min_res || res.nz < min_res) {
    fail(ErrorCode::InvalidArgument,
         std::string(what) + ": resolution must be >= " + std::to_string(min_res) + " per axis");
  }
  const Vec3 e = bbox.extent();
  if (!all_finite(bbox.lo) || !all_finite(bbox.hi) || !(e.minCoeff() > 0.0)) {
    fail(ErrorCode::InvalidArgument, std::string(what) + ": bbox must have positive extent");
  }
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  return out;
}

std::string format_vec(const Vec3& v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", v.x(), v.y(), v.z());
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid

Vec3 Grid::point(int i, int j, int k) const {
  const Vec3 e = bbox.extent();
  return {bbox.lo.x() + e.x() * static_cast<double>(i) / static_cast<double>(resolution.nx - 1),
          bbox.lo.y() + e.y() * static_cast<double>(j) / static_cast<double>(resolution.ny - 1),
          bbox.lo.z() + e.z() * static_cast<double>(k) / static_cast<double>(resolution.nz - 1)};
}

Vec3 Grid::cell_size() const {
  const Vec3 e = bbox.extent();
  return {e.x() / (resolution.nx - 1), e.y() / (resolution.ny - 1), e.z() / (resolution.nz - 1)};
}

namespace {

PointSet lattice_points(const Grid& grid) {
  const Resolution& r = grid.resolution;
  PointSet points(r.count());
  for (int i = 0; i < r.nx; ++i) {
    for (int j = 0; j < r.ny; ++j) {
      for (int k = 0; k < r.nz; ++k) points[grid.index(i, j, k)] = grid.point(i, j, k);
    }
  }
  return points;
}

}  // namespace

// ---------------------------------------------------------------------------
// Deformation and sampling

DeformationTrace deform_cloud(const Field& field, const PointSet& points, int steps, double step_fraction,
                              double eps) {
  if (steps < 1) fail(ErrorCode::InvalidArgument, "deform: steps must be >= 1");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "deform: step fraction must be in (0, 1]");
  }
  DeformationTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(steps) + 1);
  trace.steps.push_back(points);
  PointSet current = points;
  for (int s = 0; s < steps; ++s) {
    const Sample sample = eval_points_with_grad(field, current);
    trace.mean_residual.push_back(mean(sample.values));
    for (std::size_t i = 0; i < current.size(); ++i) {
      const double norm = sample.grads[i].norm();
      if (norm < eps) continue;
      current[i] -= step_fraction * sample.values[i] * (sample.grads[i] / norm);
    }
    trace.steps.push_back(current);
  }
  trace.mean_residual.push_back(mean(eval_points(field, current)));
  return trace;
}

Grid eval_grid(const Field& field, const BBox& bbox, const Resolution& resolution) {
  validate_lattice(bbox, resolution, 2, "eval_grid");
  Grid grid{bbox, resolution, {}};
  grid.values = eval_points(field, lattice_points(grid));
  return grid;
}

SurfacePoints extract_surface_points(const Field& field, std::size_t n, double residual_threshold, Rng& rng,
                                     const BBox& bbox) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "extract_surface_points: n must be >= 1");
  validate_lattice(bbox, Resolution::cubic(2), 2, "extract_surface_points");
  PointSet start(n);
  for (auto& p : start) p = rng.uniform_in(bbox);
  const DeformationTrace trace = deform_cloud(field, start, 10, 0.5);
  const PointSet& final_points = trace.steps.back();
  const Sample sample = eval_points_with_grad(field, final_points);

  SurfacePoints out;
  out.candidates = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (sample.grads[i].norm() < 1e-8) continue;
    if (!(sample.values[i] < residual_threshold)) continue;
    out.points.push_back(final_points[i]);
  }
  out.kept_fraction = static_cast<double>(out.points.size()) / static_cast<double>(n);
  return out;
}

SurfacePoints collect_surface_points(const Field& field, std::size_t target, double residual_threshold, Rng& rng,
                                     const BBox& bbox, std::size_t max_candidates) {
  if (target == 0) fail(ErrorCode::InvalidArgument, "collect_surface_points: target must be >= 1");
  if (max_candidates == 0) max_candidates = 50 * target;
  SurfacePoints out;
  while (out.points.size() < target && out.candidates < max_candidates) {
    const std::size_t batch = std::min(std::max<std::size_t>(target, 1024), max_candidates - out.candidates);
    const SurfacePoints part = extract_surface_points(field, batch, residual_threshold, rng, bbox);
    out.candidates += part.candidates;
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
  }
  const std::size_t kept = out.points.size();
  if (out.points.size() > target) out.points.resize(target);
  out.kept_fraction = out.candidates == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(out.candidates);
  return out;
}

// ---------------------------------------------------------------------------
// Mesh extraction

double default_iso_band(const BBox& bbox, const Resolution& resolution) {
  validate_lattice(bbox, resolution, 2, "iso band");
  const Grid grid{bbox, resolution, {}};
  return 2.0 * grid.cell_size().norm();
}

std::vector<Edge> Mesh::compute_boundary_edges(const std::vector<Triangle>& triangles) {
  std::map<Edge, int> uses;
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t a = t[e];
      const std::uint32_t b = t[(e + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<Edge> boundary;
  for (const auto& [edge, count] : uses) {
    if (count == 1) boundary.push_back(edge);
  }
  return boundary;
}

namespace {

// Corner c of a cube sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
constexpr std::array<std::array<int, 2>, 12> kCubeEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z
}};

// Six tetrahedra sharing the main diagonal 0-7, one per axis ordering.
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
    {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7},
}};

struct Extractor {
  const Grid& grid;
  const std::vector<Vec3>& grads;
  double band;
  Mesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of_edge;
  std::size_t degenerate = 0;

  std::size_t corner_id(int i, int j, int k, int c) const {
    return grid.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
  }

  bool crossing(std::size_t a, std::size_t b) const {
    return grads[a].dot(grads[b]) < 0.0 && std::min(grid.values[a], grid.values[b]) < band;
  }

  Vec3 lattice_point(std::size_t id) const {
    const int nz = grid.resolution.nz;
    const int ny = grid.resolution.ny;
    const auto k = static_cast<int>(id % static_cast<std::size_t>(nz));
    const auto j = static_cast<int>((id / static_cast<std::size_t>(nz)) % static_cast<std::size_t>(ny));
    const auto i = static_cast<int>(id / (static_cast<std::size_t>(nz) * static_cast<std::size_t>(ny)));
    return grid.point(i, j, k);
  }

  std::uint32_t vertex(std::size_t a, std::size_t b) {
    const std::size_t lo = std::min(a, b);
    const std::size_t hi = std::max(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(lo) * grid.resolution.count() + hi;
    const auto it = vertex_of_edge.find(key);
    if (it != vertex_of_edge.end()) return it->second;
    const double f_lo = grid.values[lo];
    const double f_hi = grid.values[hi];
    const double sum = f_lo + f_hi;
    const double t = std::clamp(sum > 0.0 ? f_lo / sum : 0.5, 0.05, 0.95);
    const Vec3 p = lattice_point(lo) + t * (lattice_point(hi) - lattice_point(lo));
    const auto index = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    vertex_of_edge.emplace(key, index);
    return index;
  }

  void emit(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    if (a == b || b == c || a == c) {
      ++degenerate;
      return;
    }
    const Vec3& pa = mesh.vertices[a];
    const double area = 0.5 * (mesh.vertices[b] - pa).cross(mesh.vertices[c] - pa).norm();
    if (!(area > 1e-14)) {
      ++degenerate;
      return;
    }
    mesh.triangles.push_back({a, b, c});
  }

  void polygonise_tet(const std::array<std::size_t, 4>& ids, const std::array<int, 4>& color) {
    std::array<int, 4> ones{};
    std::array<int, 4> zeros{};
    int n1 = 0;
    int n0 = 0;
    for (int v = 0; v < 4; ++v) {
      if (color[v]) {
        ones[n1++] = v;
      } else {
        zeros[n0++] = v;
      }
    }
    if (n1 == 0 || n0 == 0) return;
    if (n1 == 1 || n0 == 1) {
      const int apex = n1 == 1 ? ones[0] : zeros[0];
      const auto& others = n1 == 1 ? zeros : ones;
      emit(vertex(ids[apex], ids[others[0]]), vertex(ids[apex], ids[others[1]]),
           vertex(ids[apex], ids[others[2]]));
      return;
    }
    // Two against two: a quad through the four mixed edges.
    const int a = ones[0], b = ones[1], c = zeros[0], d = zeros[1];
    const std::uint32_t ac = vertex(ids[a], ids[c]);
    const std::uint32_t ad = vertex(ids[a], ids[d]);
    const std::uint32_t bd = vertex(ids[b], ids[d]);
    const std::uint32_t bc = vertex(ids[b], ids[c]);
    emit(ac, ad, bd);
    emit(ac, bd, bc);
  }
};

}  // namespace

ExtractedMesh extract_mesh(const Field& field, const BBox& bbox, const Resolution& resolution, double iso_band) {
  validate_lattice(bbox, resolution, 8, "extract_mesh");
  if (!(iso_band > 0.0)) fail(ErrorCode::InvalidArgument, "extract_mesh: iso band must be positive");

  Grid grid{bbox, resolution, {}};
  const Sample sample = eval_points_with_grad(field, lattice_points(grid));
  grid.values = sample.values;

  Extractor ex{grid, sample.grads, iso_band, {}, {}, 0};
  ExtractedMesh out;
  const Resolution& r = resolution;

  for (int i = 0; i < r.nx; ++i) {
    for (int j = 0; j < r.ny; ++j) {
      for (int k = 0; k < r.nz; ++k) {
        const std::size_t a = grid.index(i, j, k);
        if (i + 1 < r.nx && ex.crossing(a, grid.index(i + 1, j, k))) ++out.stats.crossing_edges;
        if (j + 1 < r.ny && ex.crossing(a, grid.index(i, j + 1, k))) ++out.stats.crossing_edges;
        if (k + 1 < r.nz && ex.crossing(a, grid.index(i, j, k + 1))) ++out.stats.crossing_edges;
      }
    }
  }

  for (int i = 0; i + 1 < r.nx; ++i) {
    for (int j = 0; j + 1 < r.ny; ++j) {
      for (int k = 0; k + 1 < r.nz; ++k) {
        std::array<std::size_t, 8> ids{};
        for (int c = 0; c < 8; ++c) ids[c] = ex.corner_id(i, j, k, c);
        std::array<bool, 12> cross{};
        bool any = false;
        for (int e = 0; e < 12; ++e) {
          cross[e] = ex.crossing(ids[kCubeEdges[e][0]], ids[kCubeEdges[e][1]]);
          any = any || cross[e];
        }
        if (!any) continue;
        ++out.stats.active_cubes;

        // Two-colour the corners: crossing edges join opposite colours.
        std::array<int, 8> color;
        color.fill(-1);
        color[0] = 0;
        bool consistent = true;
        for (bool changed = true; changed && consistent;) {
          changed = false;
          for (int e = 0; e < 12; ++e) {
            const int u = kCubeEdges[e][0];
            const int v = kCubeEdges[e][1];
            const int want = cross[e] ? 1 : 0;
            if (color[u] >= 0 && color[v] < 0) {
              color[v] = color[u] ^ want;
              changed = true;
            } else if (color[v] >= 0 && color[u] < 0) {
              color[u] = color[v] ^ want;
              changed = true;
            } else if (color[u] >= 0 && color[v] >= 0 && (color[u] ^ color[v]) != want) {
              consistent = false;
              break;
            }
          }
        }
        if (!consistent) {
          ++out.stats.inconsistent_cubes;
          continue;
        }
        for (const auto& tet : kTets) {
          ex.polygonise_tet({ids[tet[0]], ids[tet[1]], ids[tet[2]], ids[tet[3]]},
                            {color[tet[0]], color[tet[1]], color[tet[2]], color[tet[3]]});
        }
      }
    }
  }

  out.stats.degenerate_triangles = ex.degenerate;
  out.mesh = std::move(ex.mesh);
  out.mesh.boundary_edges = Mesh::compute_boundary_edges(out.mesh.triangles);
  if (out.mesh.triangles.empty()) {
    out.diagnostic = out.stats.crossing_edges == 0
                         ? "no crossing edges inside the iso band; the field does not approach zero in the box"
                         : "crossing edges found but every active cube was inconsistent or degenerate";
  }
  return out;
}

std::vector<BoundaryLoop> mesh_boundary_loops(const Mesh& mesh) {
  const std::vector<Edge>& edges = mesh.boundary_edges;
  std::map<std::uint32_t, std::vector<std::size_t>> incident;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    for (const std::uint32_t v : edges[e]) {
      if (v >= mesh.vertices.size()) fail(ErrorCode::InvalidArgument, "boundary edge references a missing vertex");
      incident[v].push_back(e);
    }
  }

  std::vector<BoundaryLoop> loops;
  std::vector<bool> edge_used(edges.size(), false);
  std::map<std::uint32_t, bool> vertex_seen;
  for (const auto& [start, _] : incident) {
    if (vertex_seen[start]) continue;
    BoundaryLoop loop;
    // Depth-first walk that prefers continuing along unused edges.
    std::vector<std::uint32_t> stack{start};
    vertex_seen[start] = true;
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      loop.vertices.push_back(v);
      const auto& inc = incident[v];
      for (auto it = inc.rbegin(); it != inc.rend(); ++it) {
        const std::size_t e = *it;
        if (!edge_used[e]) {
          edge_used[e] = true;
          loop.edges.push_back(edges[e]);
        }
        const std::uint32_t w = edges[e][0] == v ? edges[e][1] : edges[e][0];
        if (!vertex_seen[w]) {
          vertex_seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    std::sort(loop.edges.begin(), loop.edges.end());
    loop.closed = std::all_of(loop.vertices.begin(), loop.vertices.end(),
                              [&](std::uint32_t v) { return incident[v].size() == 2; });
    loops.push_back(std::move(loop));
  }
  return loops;
}

// ---------------------------------------------------------------------------
// Export

void save_grid(const Grid& grid, const std::string& raw_path, const std::string& sidecar_path) {
  if (grid.values.size() != grid.resolution.count()) {
    fail(ErrorCode::InvalidArgument, "save_grid: value count does not match resolution");
  }
  {
    std::ofstream raw = open_output(raw_path, std::ios::out | std::ios::binary);
    for (const double v : grid.values) io::write_f32_le(raw, static_cast<float>(v));
    if (!raw) fail(ErrorCode::Io, "failed writing '" + raw_path + "'");
  }
  nlohmann::ordered_json side;
  side["bbox"] = {{"min", {grid.bbox.lo.x(), grid.bbox.lo.y(), grid.bbox.lo.z()}},
                  {"max", {grid.bbox.hi.x(), grid.bbox.hi.y(), grid.bbox.hi.z()}}};
  side["resolution"] = {grid.resolution.nx, grid.resolution.ny, grid.resolution.nz};
  side["dtype"] = "f32";
  side["endianness"] = "little";
  side["layout"] = "x-major: index = (i * ny + j) * nz + k";
  std::ofstream out = open_output(sidecar_path);
  out << side.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "failed writing '" + sidecar_path + "'");
}

void save_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& v : mesh.vertices) out << "v " << format_vec(v) << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) fail(ErrorCode::Io, "failed writing '" + path + "'");
}

void save_boundary_obj(const Mesh& mesh, const std::vector<BoundaryLoop>& loops, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const auto& v : mesh.vertices) out << "v " << format_vec(v) << '\n';
  for (std::size_t l = 0; l < loops.size(); ++l) {
    out << "g loop" << l << '\n';
    for (const auto& e : loops[l].edges) out << "l " << e[0] + 1 << ' ' << e[1] + 1 << '\n';
  }
  if (!out) fail(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace udf
