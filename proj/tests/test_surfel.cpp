#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "udfforge/error.hpp"
#include "udfforge/kdtree.hpp"
#include "udfforge/rng.hpp"
#include "udfforge/scene.hpp"
#include "udfforge/surfel.hpp"

using namespace udf;

namespace {

SurfelCloud random_cloud(std::size_t n, std::uint64_t seed, bool extras) {
  Rng rng(seed);
  SurfelCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    Surfel s;
    s.center = rng.uniform_in(BBox{});
    s.rotation = frame_from_normal(rng.normal3().normalized(), rng.uniform(0, 6));
    s.scales = {rng.uniform(0.001, 0.1), rng.uniform(0.001, 0.1)};
    if (extras) {
      s.opacity = rng.uniform(0, 1);
      s.color = Vec3(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
    }
    c.surfels.push_back(s);
  }
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<double> brute_knn(const PointSet& pts, std::size_t k) {
  std::vector<double> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) d.push_back((pts[i] - pts[j]).norm());
    }
    std::sort(d.begin(), d.end());
    out.push_back(d[k - 1]);
  }
  return out;
}

}  // namespace

TEST_CASE("cloud: text and binary round trips are exact") {
  testing::TempDir dir("cloud_rt");
  for (bool extras : {false, true}) {
    const SurfelCloud c = random_cloud(64, extras ? 2 : 1, extras);
    for (auto fmt : {CloudFormat::Text, CloudFormat::Binary}) {
      const std::string path = dir.file("c.surfels");
      save_cloud(c, path, fmt);
      const SurfelCloud back = load_cloud(path);
      REQUIRE(back.size() == c.size());
      for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back.surfels[i].center == c.surfels[i].center);
        CHECK(back.surfels[i].rotation == c.surfels[i].rotation);
        CHECK(back.surfels[i].scales == c.surfels[i].scales);
        CHECK(back.surfels[i].opacity == c.surfels[i].opacity);
        CHECK(back.surfels[i].color == c.surfels[i].color);
      }
    }
  }
}

TEST_CASE("cloud: invalid records name their line") {
  testing::TempDir dir("cloud_bad");
  const std::string head = "# comment\nsurfelcloud v1 2\n";
  const std::string ok = "0 0 0 1 0 0 0 1 0 0 0 1 0.1 0.1\n";
  write_text(dir.file("scale.surfels"), head + ok + "0 0 0 1 0 0 0 1 0 0 0 1 0 0.1\n");
  try {
    load_cloud(dir.file("scale.surfels"));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":4") != std::string::npos);
    CHECK(std::string(e.what()).find("scale") != std::string::npos);
  }

  write_text(dir.file("rot.surfels"), head + ok + "0 0 0 1 0 0 0 1.1 0 0 0 1 0.1 0.1\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("rot.surfels")), doctest::Contains(":4"), Error);

  write_text(dir.file("refl.surfels"), head + ok + "0 0 0 1 0 0 0 1 0 0 0 -1 0.1 0.1\n");
  CHECK_THROWS_AS(load_cloud(dir.file("refl.surfels")), Error);

  write_text(dir.file("hdr.surfels"), "surfelcloud v2 1\n" + ok);
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("hdr.surfels")), doctest::Contains(":1"), Error);

  write_text(dir.file("count.surfels"), head + ok);
  CHECK_THROWS_AS(load_cloud(dir.file("count.surfels")), Error);

  write_text(dir.file("fields.surfels"), "surfelcloud v1 1\n0 0 0 1 0 0 0 1 0 0 0 1 0.1\n");
  CHECK_THROWS_WITH_AS(load_cloud(dir.file("fields.surfels")), doctest::Contains(":2"), Error);
}

TEST_CASE("cloud: empty clouds only for inspection") {
  testing::TempDir dir("cloud_empty");
  write_text(dir.file("e.surfels"), "surfelcloud v1 0\n");
  CHECK(load_cloud(dir.file("e.surfels"), true).empty());
  CHECK_THROWS_AS(load_cloud(dir.file("e.surfels"), false), Error);
}

TEST_CASE("cloud: normalization maps into the unit cube") {
  SurfelCloud c = random_cloud(50, 3, false);
  for (auto& s : c.surfels) s.center = 10.0 * s.center + Vec3(5, 0, -3);
  const SurfelCloud n = normalize_cloud(c);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(n.surfels[i].center.cwiseAbs().maxCoeff() <= 1.0);
    CHECK((n.transform.apply(c.surfels[i].center) - n.surfels[i].center).norm() < 1e-12);
    CHECK((n.transform.invert(n.surfels[i].center) - c.surfels[i].center).norm() < 1e-12);
    CHECK(n.surfels[i].scales.isApprox(n.transform.scale * c.surfels[i].scales));
  }
  const SurfelCloud inside = random_cloud(10, 4, false);
  CHECK(normalize_cloud(inside).transform.is_identity());
}

TEST_CASE("frame_from_normal is a proper rotation") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Vec3 n = rng.normal3().normalized();
    const Mat3 r = frame_from_normal(n, rng.uniform(-3, 3));
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((r.col(2) - n).norm() < 1e-12);
  }
}

TEST_CASE("scene: clean disk lies on the oracle") {
  const SyntheticScene s = gen_scene(scene_kind_from_string("plane_disk"), 2000, 0.0, 1);
  REQUIRE(s.cloud.size() == 2000);
  for (const auto& surfel : s.cloud.surfels) {
    CHECK(s.oracle.eval(surfel.center) <= 1e-12);
    CHECK(std::abs(std::abs(surfel.normal().z()) - 1.0) < 1e-12);
    CHECK(surfel.scales.minCoeff() >= 0.01);
    CHECK(surfel.scales.maxCoeff() <= 0.05);
  }
  for (const auto& p : s.gt_samples) CHECK(s.oracle.eval(p) <= 1e-12);
}

TEST_CASE("scene: clean unit sphere") {
  SceneOptions o;
  o.radius = 1.0;
  const SyntheticScene s = gen_scene(SceneKind::Sphere, 500, 0.0, 2, o);
  for (const auto& surfel : s.cloud.surfels) {
    CHECK(std::abs(surfel.center.norm() - 1.0) <= 1e-12);
    CHECK(std::abs(std::abs(surfel.normal().dot(surfel.center.normalized())) - 1.0) < 1e-12);
  }
}

TEST_CASE("scene: every kind is clean at zero noise and deterministic") {
  for (const char* name : {"plane", "disk", "sphere", "parallel_sheets", "curved_sheet"}) {
    const SceneKind kind = scene_kind_from_string(name);
    const SyntheticScene a = gen_scene(kind, 300, 0.0, 5);
    const SyntheticScene b = gen_scene(kind, 300, 0.0, 5);
    for (std::size_t i = 0; i < a.cloud.size(); ++i) {
      CHECK(a.oracle.eval(a.cloud.surfels[i].center) <= 1e-12);
      CHECK(a.cloud.surfels[i].center == b.cloud.surfels[i].center);
      CHECK(a.cloud.surfels[i].center.cwiseAbs().maxCoeff() <= 1.0);
      validate_surfel(a.cloud.surfels[i], name);
    }
  }
  CHECK_THROWS_AS(scene_kind_from_string("torus"), Error);
  CHECK_THROWS_AS(gen_scene(SceneKind::Disk, 0, 0.0, 1), Error);
  CHECK_THROWS_AS(gen_scene(SceneKind::Disk, 10, -0.1, 1), Error);
}

TEST_CASE("scene: noise statistics") {
  // Offsets are isotropic N(0, sigma^2 I); the oracle distance of a center on
  // the flat part of the disk is |z|, a half-normal with mean sigma sqrt(2/pi).
  const double sigma = 0.02;
  const std::size_t n = 2000;
  const SyntheticScene s = gen_scene(SceneKind::Disk, n, sigma, 7);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& surfel : s.cloud.surfels) {
    const double z = surfel.center.z();
    sum += std::abs(z);
    sum_sq += z * z;
    CHECK(s.oracle.eval(surfel.center) <= 4.0 * sigma);
  }
  const double half_normal_mean = sigma * std::sqrt(2.0 / std::numbers::pi);
  const double half_normal_sd = sigma * std::sqrt(1.0 - 2.0 / std::numbers::pi);
  CHECK(std::abs(sum / n - half_normal_mean) < 3.0 * half_normal_sd / std::sqrt(double(n)));
  CHECK(std::sqrt(sum_sq / n) == doctest::Approx(sigma).epsilon(0.1));
}

TEST_CASE("knn: small hand cases") {
  const PointSet two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const auto d2 = knn_distance(two, 1);
  CHECK(d2 == std::vector<double>{1.0, 1.0});
  PointSet line;
  for (int i = 0; i < 5; ++i) line.push_back(Vec3(i, 0, 0));
  CHECK(knn_distance(line, 2) == std::vector<double>{2.0, 1.0, 1.0, 1.0, 2.0});
  CHECK_THROWS_AS(knn_distance(line, 5), Error);
  CHECK_THROWS_AS(knn_distance(line, 0), Error);
}

TEST_CASE("knn: matches brute force") {
  Rng rng(8);
  PointSet pts(200);
  for (auto& p : pts) p = rng.uniform_in(BBox{});
  for (std::size_t k : {1, 7, 50}) CHECK(knn_distance(pts, k) == brute_knn(pts, k));
  // Duplicate positions and a lattice full of ties.
  PointSet grid;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) grid.push_back(Vec3(i, j, 0));
  grid.push_back(Vec3(2, 2, 0));
  for (std::size_t k : {1, 4, 9}) CHECK(knn_distance(grid, k) == brute_knn(grid, k));
}

TEST_CASE("kdtree: neighbour order breaks ties by index") {
  const PointSet pts = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 3)};
  const KdTree tree(pts);
  const auto nn = tree.knn(Vec3::Zero(), 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0].index == 0);
  CHECK(nn[1].index == 1);
  CHECK(nn[2].index == 2);
  CHECK(tree.nearest(Vec3::Zero(), 0).index == 1);

  Rng rng(3);
  PointSet cloud(500);
  for (auto& p : cloud) p = rng.uniform_in(BBox{});
  const KdTree big(cloud);
  for (int i = 0; i < 200; ++i) {
    const Vec3 q = rng.uniform_in(BBox{});
    CHECK(big.nearest(q).dist2 == testing::brute_nearest2(q, cloud));
  }
}
