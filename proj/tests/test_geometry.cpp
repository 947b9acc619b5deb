#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "udfforge/error.hpp"
#include "udfforge/geometry.hpp"
#include "udfforge/parallel.hpp"

using namespace udf;

namespace {

// Edge incidence recount, independent of Mesh::compute_boundary_edges.
std::vector<Edge> recount_boundary(const Mesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> use;
  for (const auto& t : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      std::uint32_t a = t[e];
      std::uint32_t b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++use[{a, b}];
    }
  }
  std::vector<Edge> out;
  for (const auto& [k, n] : use) {
    if (n == 1) out.push_back({k.first, k.second});
  }
  return out;
}

void check_mesh_valid(const Mesh& m) {
  for (const auto& t : m.triangles) {
    for (auto i : t) CHECK(i < m.vertices.size());
    const Vec3 n = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
    CHECK(0.5 * n.norm() > 1e-14);
  }
  CHECK(m.boundary_edges == recount_boundary(m));
}

}  // namespace

TEST_CASE("deform: sphere full and half steps") {
  const auto sphere = AnalyticField::sphere(Vec3::Zero(), 1.0);
  const auto full = deform_cloud(sphere, PointSet{Vec3(2, 0, 0), Vec3(0.3, -2, 1)}, 1, 1.0);
  REQUIRE(full.steps.size() == 2);
  for (const auto& p : full.steps[1]) CHECK(std::abs(p.norm() - 1.0) < 1e-15);
  const auto half = deform_cloud(sphere, PointSet{Vec3(2, 0, 0)}, 1, 0.5);
  CHECK(half.steps[1][0] == Vec3(1.5, 0, 0));
  CHECK(half.mean_residual.size() == 2);
  CHECK(half.mean_residual[0] == 1.0);
  CHECK(half.mean_residual[1] == 0.5);
}

TEST_CASE("deform: converged points stay put") {
  const auto disk = AnalyticField::disk(Vec3::Zero(), Vec3::UnitZ(), 0.6);
  Rng rng(1);
  PointSet pts(500);
  for (auto& p : pts) p = rng.uniform_in(BBox{});
  const auto first = deform_cloud(disk, pts, 3, 1.0);
  const auto second = deform_cloud(disk, first.steps.back(), 1, 1.0);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((second.steps[1][i] - first.steps.back()[i]).norm() < 1e-10);
  CHECK(first.steps.size() == 4);
}

TEST_CASE("grid: plane slices and corners") {
  const Grid g = eval_grid(AnalyticField::plane(), BBox{}, Resolution::cubic(3));
  REQUIRE(g.values.size() == 27);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(g.at(i, j, 0) == 1.0);
      CHECK(g.at(i, j, 1) == 0.0);
      CHECK(g.at(i, j, 2) == 1.0);
    }
  const BBox box{Vec3(-1, -2, 0), Vec3(3, 1, 5)};
  const Grid c = eval_grid(AnalyticField::plane(), box, Resolution::cubic(2));
  REQUIRE(c.values.size() == 8);
  CHECK(c.point(0, 0, 0) == box.lo);
  CHECK(c.point(1, 1, 1) == box.hi);
  CHECK(c.at(0, 0, 0) == 0.0);
  CHECK(c.at(1, 1, 1) == 5.0);
  CHECK(c.at(1, 0, 1) == 5.0);
  CHECK_THROWS_AS(eval_grid(AnalyticField::plane(), BBox{}, Resolution{1, 3, 3}), Error);
  CHECK_THROWS_AS(eval_grid(AnalyticField::plane(), BBox{Vec3::Zero(), Vec3(1, 0, 1)}, Resolution::cubic(3)),
                  Error);
}

TEST_CASE("grid: sphere minimum bound by half a cell diagonal") {
  const Grid g = eval_grid(AnalyticField::sphere(Vec3::Zero(), 0.7), BBox{}, Resolution::cubic(33));
  double lo = 1e9;
  for (double v : g.values) lo = std::min(lo, v);
  CHECK(lo <= 0.5 * g.cell_size().norm());
}

TEST_CASE("grid: equals direct evaluation bit for bit at any thread count") {
  FieldArch a;
  a.num_layers = 3;
  a.hidden_width = 16;
  a.encoding_frequencies = 2;
  const auto f = NeuralField::initialize(a, 3);
  const Resolution res{9, 7, 5};
  for (int threads : {1, 3}) {
    set_max_threads(threads);
    const Grid g = eval_grid(f, BBox{}, res);
    for (int i = 0; i < res.nx; ++i)
      for (int j = 0; j < res.ny; ++j)
        for (int k = 0; k < res.nz; ++k) CHECK(g.at(i, j, k) == f.eval(g.point(i, j, k)));
  }
  set_max_threads(1);
}

TEST_CASE("surface points: sphere and infinite threshold") {
  const auto sphere = AnalyticField::sphere(Vec3::Zero(), 0.5);
  Rng rng(4);
  const SurfacePoints sp = extract_surface_points(sphere, 2000, 1e-3, rng);
  CHECK(sp.candidates == 2000);
  CHECK(!sp.points.empty());
  for (const auto& p : sp.points) CHECK(std::abs(p.norm() - 0.5) < 1e-3);
  Rng rng2(4);
  const SurfacePoints all = extract_surface_points(sphere, 500, INFINITY, rng2);
  CHECK(all.points.size() == 500);
  CHECK(all.kept_fraction == 1.0);

  Rng rng3(5);
  const SurfacePoints many = collect_surface_points(sphere, 3000, 1e-3, rng3);
  CHECK(many.points.size() == 3000);
}

TEST_CASE("mesh: closed sphere") {
  const auto sphere = AnalyticField::sphere(Vec3::Zero(), 0.6);
  const Resolution res = Resolution::cubic(64);
  const BBox box{};
  const ExtractedMesh m = extract_mesh(sphere, box, res, default_iso_band(box, res));
  REQUIRE(!m.mesh.triangles.empty());
  check_mesh_valid(m.mesh);
  CHECK(m.mesh.boundary_edges.empty());
  CHECK(mesh_boundary_loops(m.mesh).empty());
  const double cell = eval_grid(sphere, box, Resolution::cubic(2)).cell_size().x() / 63.0;
  for (const auto& v : m.mesh.vertices) CHECK(std::abs(v.norm() - 0.6) < 2.0 * cell);
}

TEST_CASE("mesh: open disk has one rim loop") {
  const auto disk = AnalyticField::disk(Vec3(0.01, -0.02, 0.013), Vec3::UnitZ(), 0.6);
  const Resolution res = Resolution::cubic(64);
  const BBox box{};
  const ExtractedMesh m = extract_mesh(disk, box, res, default_iso_band(box, res));
  REQUIRE(!m.mesh.triangles.empty());
  check_mesh_valid(m.mesh);
  const auto loops = mesh_boundary_loops(m.mesh);
  REQUIRE(loops.size() == 1);
  CHECK(loops[0].closed);
  double mean_rho = 0.0;
  for (auto v : loops[0].vertices) {
    mean_rho += std::hypot(m.mesh.vertices[v].x() - 0.01, m.mesh.vertices[v].y() + 0.02);
  }
  mean_rho /= static_cast<double>(loops[0].vertices.size());
  CHECK(std::abs(mean_rho - 0.6) < 0.1);
}

TEST_CASE("mesh: no crossings gives an empty mesh with a diagnostic") {
  const auto far = AnalyticField::plane(Vec3::UnitZ(), 0.0).shifted(1.0);
  const ExtractedMesh m = extract_mesh(far, BBox{}, Resolution::cubic(16), 0.1);
  CHECK(m.mesh.triangles.empty());
  CHECK_FALSE(m.diagnostic.empty());
  CHECK_THROWS_AS(extract_mesh(far, BBox{}, Resolution::cubic(4), 0.1), Error);
}

TEST_CASE("mesh: extraction is deterministic across thread counts") {
  const auto cyl = AnalyticField::cylinder_patch(Vec3(0, 0, -0.5), 1.0, 0.6, 0.8);
  set_max_threads(1);
  const ExtractedMesh a = extract_mesh(cyl, BBox{}, Resolution::cubic(32), default_iso_band(BBox{}, Resolution::cubic(32)));
  set_max_threads(4);
  const ExtractedMesh b = extract_mesh(cyl, BBox{}, Resolution::cubic(32), default_iso_band(BBox{}, Resolution::cubic(32)));
  set_max_threads(1);
  CHECK(a.mesh.vertices == b.mesh.vertices);
  CHECK(a.mesh.triangles == b.mesh.triangles);
  CHECK(mesh_boundary_loops(a.mesh).size() == 1);
}

TEST_CASE("loops: single triangle and two disjoint triangles") {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}};
  m.boundary_edges = Mesh::compute_boundary_edges(m.triangles);
  CHECK(m.boundary_edges.size() == 3);
  auto loops = mesh_boundary_loops(m);
  REQUIRE(loops.size() == 1);
  CHECK(loops[0].edges.size() == 3);
  CHECK(loops[0].closed);

  m.vertices.push_back(Vec3(5, 0, 0));
  m.vertices.push_back(Vec3(6, 0, 0));
  m.vertices.push_back(Vec3(5, 1, 0));
  m.vertices.push_back(Vec3(6, 1, 0));
  m.triangles.push_back({3, 4, 5});
  m.triangles.push_back({4, 6, 5});
  m.boundary_edges = Mesh::compute_boundary_edges(m.triangles);
  CHECK(m.boundary_edges == recount_boundary(m));
  loops = mesh_boundary_loops(m);
  CHECK(loops.size() == 2);
}

TEST_CASE("export: grid sidecar and OBJ files") {
  testing::TempDir dir("geometry_export");
  const Grid g = eval_grid(AnalyticField::plane(), BBox{}, Resolution{4, 3, 2});
  save_grid(g, dir.file("g.f32"), dir.file("g.json"));
  CHECK(std::filesystem::file_size(dir.file("g.f32")) == 24 * 4);
  std::ifstream raw(dir.file("g.f32"), std::ios::binary);
  std::vector<float> back(24);
  raw.read(reinterpret_cast<char*>(back.data()), 24 * 4);
  for (std::size_t i = 0; i < 24; ++i) CHECK(back[i] == static_cast<float>(g.values[i]));
  const auto side = nlohmann::json::parse(std::ifstream(dir.file("g.json")));
  CHECK(side["dtype"] == "f32");
  CHECK(side["resolution"] == nlohmann::json({4, 3, 2}));

  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}};
  m.boundary_edges = Mesh::compute_boundary_edges(m.triangles);
  save_obj(m, dir.file("m.obj"));
  save_boundary_obj(m, mesh_boundary_loops(m), dir.file("b.obj"));
  std::ifstream obj(dir.file("m.obj"));
  int v = 0;
  int f = 0;
  for (std::string line; std::getline(obj, line);) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  CHECK(v == 3);
  CHECK(f == 1);
  std::ifstream bobj(dir.file("b.obj"));
  int l = 0;
  for (std::string line; std::getline(bobj, line);) {
    if (line.rfind("l ", 0) == 0) ++l;
  }
  CHECK(l == 3);
}
