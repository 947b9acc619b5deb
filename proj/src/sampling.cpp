#include "udfforge/sampling.hpp"

#include <cmath>
#include <numeric>

#include "udfforge/error.hpp"

namespace udf {

void SamplerConfig::validate() const {
  if (planes_per_batch < 1 || roots_per_plane < 1 || offsets_per_root < 1 || knn_k < 1 ||
      queries_per_center < 1 || large_scale_root_multiplier < 1) {
    fail(ErrorCode::InvalidArgument, "sampler: all counts must be >= 1");
  }
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorCode::InvalidArgument, "sampler: T must be > 0");
  if (!(large_scale_threshold_factor > 0.0)) {
    fail(ErrorCode::InvalidArgument, "sampler: large_scale_threshold_factor must be > 0");
  }
}

std::vector<std::size_t> choose_batch(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= n) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::vector<QuerySample> sample_queries(const SurfelCloud& cloud, std::span<const double> sigmas,
                                        std::span<const std::size_t> centers,
                                        const SamplerConfig& config, Rng& rng) {
  if (cloud.empty()) fail(ErrorCode::InvalidArgument, "sample_queries: empty cloud");
  if (sigmas.size() != cloud.size()) fail(ErrorCode::InvalidArgument, "sample_queries: one sigma per surfel required");
  std::vector<QuerySample> out;
  out.reserve(centers.size() * config.queries_per_center);
  for (const std::size_t i : centers) {
    if (i >= cloud.size()) fail(ErrorCode::InvalidArgument, "sample_queries: center index out of range");
    for (std::size_t r = 0; r < config.queries_per_center; ++r) {
      const Vec3 noise = rng.normal3();
      out.push_back({cloud.surfels[i].center + sigmas[i] * noise, i});
    }
  }
  return out;
}

std::vector<QuerySample> sample_queries(const SurfelCloud& cloud, std::span<const double> sigmas,
                                        const SamplerConfig& config, Rng& rng) {
  std::vector<std::size_t> all(cloud.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return sample_queries(cloud, sigmas, all, config, rng);
}

Vec3 plane_root(const Surfel& surfel, double u, double v) {
  return surfel.center + surfel.rotation * Vec3(surfel.scales[0] * u, surfel.scales[1] * v, 0.0);
}

std::vector<Vec3> sample_plane_roots(const Surfel& surfel, std::size_t h, Rng& rng) {
  std::vector<Vec3> roots;
  roots.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double u = rng.normal();
    const double v = rng.normal();
    roots.push_back(plane_root(surfel, u, v));
  }
  return roots;
}

std::vector<std::size_t> allocate_roots(const SurfelCloud& cloud, const SamplerConfig& config) {
  if (cloud.empty()) fail(ErrorCode::InvalidArgument, "allocate_roots: empty cloud");
  double mean = 0.0;
  for (const auto& s : cloud.surfels) mean += s.max_scale();
  mean /= static_cast<double>(cloud.size());
  const double threshold = config.large_scale_threshold_factor * mean;
  std::vector<std::size_t> counts(cloud.size(), config.roots_per_plane);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.surfels[i].max_scale() > threshold) {
      counts[i] = config.roots_per_plane * config.large_scale_root_multiplier;
    }
  }
  return counts;
}

PlaneSample make_plane_sample(const Surfel& surfel, std::size_t surfel_index, const Vec3& root,
                              double offset) {
  const Vec3 n = surfel.normal().normalized();
  return {root, root + offset * n, offset, std::abs(offset), surfel_index};
}

std::vector<PlaneSample> sample_offsets(const Surfel& surfel, std::size_t surfel_index,
                                        std::span<const Vec3> roots, const SamplerConfig& config,
                                        Rng& rng) {
  if (!(config.T > 0.0)) fail(ErrorCode::InvalidArgument, "sample_offsets: T must be > 0");
  std::vector<PlaneSample> out;
  out.reserve(roots.size() * config.offsets_per_root);
  for (const Vec3& root : roots) {
    for (std::size_t b = 0; b < config.offsets_per_root; ++b) {
      out.push_back(make_plane_sample(surfel, surfel_index, root, rng.uniform(-config.T, config.T)));
    }
  }
  return out;
}

}  // namespace udf
