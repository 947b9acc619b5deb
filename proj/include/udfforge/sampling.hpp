#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "udfforge/rng.hpp"
#include "udfforge/surfel.hpp"

namespace udf {

struct SamplerConfig {
  std::size_t planes_per_batch = 500;
  std::size_t roots_per_plane = 10;  // H
  std::size_t offsets_per_root = 1;  // B
  double T = 0.02;
  std::size_t knn_k = 50;
  std::size_t queries_per_center = 1;
  double large_scale_threshold_factor = 3.0;
  std::size_t large_scale_root_multiplier = 2;

  void validate() const;
};

struct QuerySample {
  Vec3 q;
  std::size_t source_index;
};

/// Self-supervision sample: `point` sits `offset` along the surfel normal from
/// `root`, and `target` = |offset| is its unsigned distance to the plane.
struct PlaneSample {
  Vec3 root;
  Vec3 point;
  double offset;
  double target;
  std::size_t surfel_index;
};

/// `count` distinct indices drawn uniformly from [0, n), in draw order. Takes
/// every index when count >= n.
std::vector<std::size_t> choose_batch(std::size_t n, std::size_t count, Rng& rng);

/// Gaussian queries around the selected centers; each center i contributes
/// config.queries_per_center samples with std sigmas[i].
std::vector<QuerySample> sample_queries(const SurfelCloud& cloud, std::span<const double> sigmas,
                                        std::span<const std::size_t> centers,
                                        const SamplerConfig& config, Rng& rng);
/// Same, over every center.
std::vector<QuerySample> sample_queries(const SurfelCloud& cloud, std::span<const double> sigmas,
                                        const SamplerConfig& config, Rng& rng);

/// mu + R (s0 u, s1 v, 0)^T.
Vec3 plane_root(const Surfel& surfel, double u, double v);
std::vector<Vec3> sample_plane_roots(const Surfel& surfel, std::size_t h, Rng& rng);

/// Per-surfel root count: H, or H * multiplier for surfels whose max scale
/// exceeds factor * mean(max scale).
std::vector<std::size_t> allocate_roots(const SurfelCloud& cloud, const SamplerConfig& config);

PlaneSample make_plane_sample(const Surfel& surfel, std::size_t surfel_index, const Vec3& root,
                              double offset);
/// B samples per root with signed offsets uniform on [-T, T].
std::vector<PlaneSample> sample_offsets(const Surfel& surfel, std::size_t surfel_index,
                                        std::span<const Vec3> roots, const SamplerConfig& config,
                                        Rng& rng);

}  // namespace udf
