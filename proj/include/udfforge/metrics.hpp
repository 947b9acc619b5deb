#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "json.hpp"
#include "udfforge/field.hpp"
#include "udfforge/rng.hpp"
#include "udfforge/types.hpp"

namespace udf {

enum class ChamferMode { Squared, Euclidean };

std::string to_string(ChamferMode mode);
ChamferMode chamfer_mode_from_string(const std::string& name);

/// mean_a min_b d(a, b) + mean_b min_a d(a, b), with d the squared or plain
/// Euclidean distance.
double chamfer(const PointSet& a, const PointSet& b, ChamferMode mode = ChamferMode::Euclidean);

struct UdfError {
  double mae = 0.0;
  double max = 0.0;
  std::size_t count = 0;  // lattice points inside the band
};

/// |f - oracle| over the lattice points of (bbox, resolution) where the
/// oracle is below `band`.
UdfError udf_error(const Field& field, const Field& oracle, const BBox& bbox, const Resolution& resolution,
                   double band);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t accepted = 0;
  std::size_t skipped = 0;
};

/// Compares input gradients with central differences of step h at n points
/// drawn uniformly from `bbox`. Points near a kink are skipped and replaced:
/// for neural fields, any pre-activation within 1e-6 of zero or a change of
/// activation pattern across the stencil; for other fields, a kink margin
/// below 10 h. Relative error is |g - g_fd| / max(|g|, |g_fd|, 1e-12).
GradCheckResult grad_check(const Field& field, std::size_t n, Rng& rng, const BBox& bbox = {},
                           double h = 1e-4);

/// Checks d f(p) / d theta for `n_params` randomly chosen parameters against
/// central differences of step h, at points drawn from `bbox` whose
/// activation pattern is stable under the perturbations.
GradCheckResult param_grad_check(const NeuralField& field, std::size_t n_params, Rng& rng,
                                 const BBox& bbox = {}, double h = 1e-6);

struct EvalReport {
  std::optional<double> chamfer;
  std::string chamfer_mode = "euclidean";
  std::optional<double> udf_mae_band;
  std::optional<double> udf_max_band;
  double band = 0.3;
  std::optional<double> grad_check_max_rel_err;
  std::optional<std::size_t> boundary_loop_count;
  std::size_t surface_points = 0;
  nlohmann::ordered_json config;
};

nlohmann::ordered_json to_json(const EvalReport& report);
/// Fixed-order human-readable table.
std::string format_report(const EvalReport& report);

}  // namespace udf
