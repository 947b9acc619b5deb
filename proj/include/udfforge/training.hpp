#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "udfforge/checkpoint.hpp"
#include "udfforge/field.hpp"
#include "udfforge/sampling.hpp"
#include "udfforge/surfel.hpp"

namespace udf {

/// How L_far differentiates through the pulled point q' = q - f(q) n(q).
enum class GradientMode {
  FirstOrder,   // n(q) = grad f / |grad f| held constant
  SecondOrder,  // also differentiate n(q) through the input gradient
};

std::string to_string(GradientMode mode);
GradientMode gradient_mode_from_string(const std::string& name);

struct TrainConfig {
  FieldArch arch;
  SamplerConfig sampler;

  double lambda_far = 1.0;
  double lambda_near = 1.0;
  double lambda_proj = 0.1;
  // Weights of the image-space losses. Stored for provenance only; nothing in
  // this library renders.
  double lambda_ssim = 0.2;
  double lambda_depth = 0.0;
  double lambda_normal = 0.05;

  std::int64_t total_iters = 5000;
  std::int64_t far_only_until = -1;  // negative: 10% of total_iters
  double lr0 = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  GradientMode gradient_mode = GradientMode::FirstOrder;
  double grad_eps = 1e-8;

  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  double degenerate_abort_fraction = 0.5;
  std::int64_t degenerate_abort_window = 100;
  std::uint64_t seed = 1;

  std::int64_t resolved_far_only_until() const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Pulling

struct PullResult {
  Vec3 point;      // q'
  double value;    // f(q)
  Vec3 direction;  // grad f / |grad f|, zero when degenerate
  double grad_norm;
  bool degenerate;
};

/// q' = q - f(q) grad f(q) / |grad f(q)|. Points with |grad f| < eps are
/// returned unchanged and flagged degenerate.
PullResult pull(const Field& field, const Vec3& q, double eps = 1e-8);
std::vector<PullResult> pull_batch(const Field& field, std::span<const Vec3> queries,
                                   double eps = 1e-8);

// ---------------------------------------------------------------------------
// Losses

/// Two-sided squared Chamfer term and its gradient with respect to each
/// projection (centers are constants).
struct ChamferGrad {
  double value = 0.0;
  std::vector<Vec3> d_projection;
};
ChamferGrad chamfer_squared_with_grad(std::span<const Vec3> projections,
                                      std::span<const Vec3> centers);

struct FarLossResult {
  double value = 0.0;
  bool skipped = false;  // every query degenerate
  std::size_t degenerate = 0;
  std::size_t total = 0;

  double degenerate_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(degenerate) / static_cast<double>(total);
  }
};

/// Value of L_far for any field.
FarLossResult loss_far(const Field& field, std::span<const Vec3> queries,
                       std::span<const Vec3> centers, double eps = 1e-8);

/// L_far value plus `weight` * dL_far/dtheta accumulated into `grad`.
FarLossResult loss_far_gradient(const NeuralField& field, std::span<const Vec3> queries,
                                std::span<const Vec3> centers, double weight, GradientMode mode,
                                double eps, Eigen::VectorXd& grad);

/// Mean |f(e) - t| over the samples.
double loss_near(const Field& field, std::span<const PlaneSample> samples);
double loss_near_gradient(const NeuralField& field, std::span<const PlaneSample> samples,
                          double weight, Eigen::VectorXd& grad);

struct ProjectionResult {
  double l_proj = 0.0;  // mean |mu' - mu| over non-degenerate surfels
  std::size_t moved = 0;
  std::size_t degenerate = 0;
};

/// Pulls each selected center with the field held fixed and moves it a
/// fraction `eta` of the way: mu <- mu + eta (mu' - mu). An empty index list
/// selects every surfel.
ProjectionResult project_surfels(const Field& field, SurfelCloud& cloud, double eta,
                                 std::span<const std::size_t> indices = {}, double eps = 1e-8);

// ---------------------------------------------------------------------------
// Optimiser

double cosine_lr(double lr0, std::int64_t iter, std::int64_t total_iters);

class Adam {
 public:
  Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  Adam(OptimizerSnapshot snapshot, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Applies one update. Returns false and leaves `params` untouched when the
  /// gradient has non-finite entries.
  bool step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

  const OptimizerSnapshot& snapshot() const { return state_; }

 private:
  OptimizerSnapshot state_;
  double beta1_;
  double beta2_;
  double epsilon_;
};

// ---------------------------------------------------------------------------
// Training loop

struct MetricRecord {
  std::int64_t iter = 0;
  std::optional<double> l_far;
  std::optional<double> l_near;
  std::optional<double> l_proj;
  double lr = 0.0;
  double degenerate_fraction = 0.0;
  bool step_skipped = false;
};

nlohmann::json to_json(const MetricRecord& record);

struct TrainState {
  const NeuralField& field;
  const SurfelCloud& cloud;
  const OptimizerSnapshot& optimizer;
  std::int64_t iteration;  // iterations completed
};

struct TrainHooks {
  std::function<void(const MetricRecord&)> on_record;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct ResumeState {
  NeuralField field;
  std::optional<OptimizerSnapshot> optimizer;
  std::int64_t iteration = 0;
  // Cloud the interrupted run started from. Query scales are taken from it.
  std::optional<SurfelCloud> initial_cloud;
};

struct TrainResult {
  NeuralField field;
  SurfelCloud cloud;
  std::vector<MetricRecord> log;
  OptimizerSnapshot optimizer;
  std::int64_t iteration = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Joint optimisation of a fresh (or resumed) field and the surfel centers.
/// Fully deterministic for a given (cloud, config, resume state).
TrainResult train(const SurfelCloud& cloud, const TrainConfig& config, const TrainHooks& hooks = {},
                  const ResumeState* resume = nullptr);

}  // namespace udf
