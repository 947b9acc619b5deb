#include "udfforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "udfforge/error.hpp"
#include "udfforge/kdtree.hpp"

namespace udf {

std::string to_string(GradientMode mode) {
  return mode == GradientMode::FirstOrder ? "first_order" : "second_order";
}

GradientMode gradient_mode_from_string(const std::string& name) {
  if (name == "first_order") return GradientMode::FirstOrder;
  if (name == "second_order") return GradientMode::SecondOrder;
  fail(ErrorCode::InvalidArgument, "unknown gradient mode '" + name + "'");
}

std::int64_t TrainConfig::resolved_far_only_until() const {
  return far_only_until >= 0 ? far_only_until : total_iters / 10;
}

void TrainConfig::validate() const {
  arch.validate();
  sampler.validate();
  for (const double w : {lambda_far, lambda_near, lambda_proj, lambda_ssim, lambda_depth, lambda_normal}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidArgument, "train: loss weights must be finite and >= 0");
  }
  if (total_iters < 1) fail(ErrorCode::InvalidArgument, "train: total_iters must be >= 1");
  if (resolved_far_only_until() > total_iters) {
    fail(ErrorCode::InvalidArgument, "train: far_only_until exceeds total_iters");
  }
  if (!(lr0 > 0.0)) fail(ErrorCode::InvalidArgument, "train: lr0 must be > 0");
  if (!(grad_eps > 0.0)) fail(ErrorCode::InvalidArgument, "train: grad_eps must be > 0");
  if (checkpoint_every < 0) fail(ErrorCode::InvalidArgument, "train: checkpoint_every must be >= 0");
}

// ---------------------------------------------------------------------------

PullResult pull(const Field& field, const Vec3& q, double eps) {
  if (!all_finite(q)) fail(ErrorCode::InvalidArgument, "pull: non-finite query");
  const FieldGradient fg = field.eval_with_grad(q);
  const double norm = fg.grad.norm();
  if (!(norm >= eps)) return {q, fg.value, Vec3::Zero(), norm, true};
  const Vec3 dir = fg.grad / norm;
  return {q - fg.value * dir, fg.value, dir, norm, false};
}

std::vector<PullResult> pull_batch(const Field& field, std::span<const Vec3> queries, double eps) {
  std::vector<double> values(queries.size());
  std::vector<Vec3> grads(queries.size());
  field.eval_with_grad_batch(queries, values, grads);
  std::vector<PullResult> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double norm = grads[i].norm();
    if (!(norm >= eps)) {
      out[i] = {queries[i], values[i], Vec3::Zero(), norm, true};
    } else {
      const Vec3 dir = grads[i] / norm;
      out[i] = {queries[i] - values[i] * dir, values[i], dir, norm, false};
    }
  }
  return out;
}

ChamferGrad chamfer_squared_with_grad(std::span<const Vec3> projections, std::span<const Vec3> centers) {
  if (projections.empty() || centers.empty()) fail(ErrorCode::InvalidArgument, "chamfer: empty point set");
  const KdTree center_tree(centers);
  const KdTree proj_tree(projections);
  const double inv_j = 1.0 / static_cast<double>(projections.size());
  const double inv_i = 1.0 / static_cast<double>(centers.size());

  ChamferGrad out;
  out.d_projection.assign(projections.size(), Vec3::Zero());
  double forward = 0.0;
  for (std::size_t j = 0; j < projections.size(); ++j) {
    const auto nn = center_tree.nearest(projections[j]);
    forward += nn.dist2;
    out.d_projection[j] += 2.0 * inv_j * (projections[j] - centers[nn.index]);
  }
  double backward = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto nn = proj_tree.nearest(centers[i]);
    backward += nn.dist2;
    out.d_projection[nn.index] += 2.0 * inv_i * (projections[nn.index] - centers[i]);
  }
  out.value = forward * inv_j + backward * inv_i;
  return out;
}

FarLossResult loss_far(const Field& field, std::span<const Vec3> queries, std::span<const Vec3> centers,
                       double eps) {
  if (queries.empty() || centers.empty()) fail(ErrorCode::InvalidArgument, "loss_far: empty point set");
  const auto pulls = pull_batch(field, queries, eps);
  FarLossResult result;
  result.total = queries.size();
  PointSet projections;
  for (const auto& p : pulls) {
    if (p.degenerate) {
      ++result.degenerate;
    } else {
      projections.push_back(p.point);
    }
  }
  if (projections.empty()) {
    result.skipped = true;
    return result;
  }
  result.value = chamfer_squared_with_grad(projections, centers).value;
  return result;
}

FarLossResult loss_far_gradient(const NeuralField& field, std::span<const Vec3> queries,
                                std::span<const Vec3> centers, double weight, GradientMode mode, double eps,
                                Eigen::VectorXd& grad) {
  if (queries.empty() || centers.empty()) fail(ErrorCode::InvalidArgument, "loss_far: empty point set");
  const auto pulls = pull_batch(field, queries, eps);
  FarLossResult result;
  result.total = queries.size();
  PointSet points;
  PointSet projections;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < pulls.size(); ++j) {
    if (pulls[j].degenerate) {
      ++result.degenerate;
      continue;
    }
    kept.push_back(j);
    points.push_back(queries[j]);
    projections.push_back(pulls[j].point);
  }
  if (kept.empty()) {
    result.skipped = true;
    return result;
  }
  const ChamferGrad cg = chamfer_squared_with_grad(projections, centers);
  result.value = cg.value;
  if (weight == 0.0) return result;

  std::vector<double> upstream(kept.size());
  std::vector<Vec3> tangents;
  if (mode == GradientMode::SecondOrder) tangents.resize(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const PullResult& p = pulls[kept[k]];
    const Vec3& u = cg.d_projection[k];
    // dq'/df = -n.
    upstream[k] = -weight * u.dot(p.direction);
    if (mode == GradientMode::SecondOrder) {
      // dq'/d(grad f) = -f (I - n n^T) / |grad f|.
      const Vec3 tangential = u - u.dot(p.direction) * p.direction;
      tangents[k] = -weight * p.value / p.grad_norm * tangential;
    }
  }
  field.accumulate_parameter_gradient(points, upstream, tangents, grad);
  return result;
}

double loss_near(const Field& field, std::span<const PlaneSample> samples) {
  if (samples.empty()) fail(ErrorCode::InvalidArgument, "loss_near: empty batch");
  PointSet points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(s.point);
  std::vector<double> values(points.size());
  field.eval_batch(points, values);
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += std::abs(values[i] - samples[i].target);
  return sum / static_cast<double>(samples.size());
}

double loss_near_gradient(const NeuralField& field, std::span<const PlaneSample> samples, double weight,
                          Eigen::VectorXd& grad) {
  if (samples.empty()) fail(ErrorCode::InvalidArgument, "loss_near: empty batch");
  PointSet points;
  points.reserve(samples.size());
  for (const auto& s : samples) points.push_back(s.point);
  std::vector<double> values(points.size());
  field.eval_batch(points, values);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  std::vector<double> upstream(samples.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = values[i] - samples[i].target;
    sum += std::abs(r);
    upstream[i] = r > 0.0 ? weight * inv_n : (r < 0.0 ? -weight * inv_n : 0.0);
  }
  if (weight != 0.0) field.accumulate_parameter_gradient(points, upstream, {}, grad);
  return sum * inv_n;
}

ProjectionResult project_surfels(const Field& field, SurfelCloud& cloud, double eta,
                                 std::span<const std::size_t> indices, double eps) {
  eta = std::clamp(eta, 0.0, 1.0);
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(cloud.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  PointSet centers;
  centers.reserve(indices.size());
  for (const std::size_t i : indices) {
    if (i >= cloud.size()) fail(ErrorCode::InvalidArgument, "project_surfels: index out of range");
    centers.push_back(cloud.surfels[i].center);
  }
  const auto pulls = pull_batch(field, centers, eps);
  ProjectionResult result;
  double sum = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (pulls[k].degenerate) {
      ++result.degenerate;
      continue;
    }
    const Vec3 delta = pulls[k].point - centers[k];
    sum += delta.norm();
    cloud.surfels[indices[k]].center = centers[k] + eta * delta;
    ++result.moved;
  }
  if (result.moved > 0) result.l_proj = sum / static_cast<double>(result.moved);
  return result;
}

// ---------------------------------------------------------------------------

double cosine_lr(double lr0, std::int64_t iter, std::int64_t total_iters) {
  if (total_iters <= 0) return lr0;
  const double t = std::clamp(static_cast<double>(iter) / static_cast<double>(total_iters), 0.0, 1.0);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

Adam::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  state_.first_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  state_.second_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
}

Adam::Adam(OptimizerSnapshot snapshot, double beta1, double beta2, double epsilon)
    : state_(std::move(snapshot)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (state_.first_moment.size() != state_.second_moment.size()) {
    fail(ErrorCode::InvalidArgument, "adam: moment vectors differ in length");
  }
}

bool Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != params.size() || grad.size() != state_.first_moment.size()) {
    fail(ErrorCode::InvalidArgument, "adam: gradient length mismatch");
  }
  if (!grad.allFinite()) return false;
  ++state_.step;
  state_.first_moment = beta1_ * state_.first_moment + (1.0 - beta1_) * grad;
  state_.second_moment = beta2_ * state_.second_moment + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  params.array() -= lr * (state_.first_moment.array() / c1) /
                    ((state_.second_moment.array() / c2).sqrt() + epsilon_);
  return true;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MetricRecord& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["iter"] = r.iter;
  j["l_far"] = opt(r.l_far);
  j["l_near"] = opt(r.l_near);
  j["l_proj"] = opt(r.l_proj);
  j["lr"] = r.lr;
  j["degenerate_fraction"] = r.degenerate_fraction;
  if (r.step_skipped) j["step_skipped"] = true;
  return j;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> query_sigmas(const SurfelCloud& cloud, std::size_t k) {
  if (cloud.size() == 1) return {cloud.surfels.front().max_scale()};
  return knn_distance(cloud, std::min(k, cloud.size() - 1));
}

}  // namespace

TrainResult train(const SurfelCloud& input, const TrainConfig& config, const TrainHooks& hooks,
                  const ResumeState* resume) {
  config.validate();
  if (input.empty()) fail(ErrorCode::InvalidArgument, "train: surfel cloud is empty");
  for (std::size_t i = 0; i < input.size(); ++i) {
    validate_surfel(input.surfels[i], "surfel " + std::to_string(i));
  }

  TrainResult result{resume ? resume->field : NeuralField::initialize(config.arch, config.seed),
                     input, {}, {}, resume ? resume->iteration : 0, false, {}};
  Adam adam = resume && resume->optimizer
                  ? Adam(*resume->optimizer, config.adam_beta1, config.adam_beta2, config.adam_epsilon)
                  : Adam(result.field.parameters().size(), config.adam_beta1, config.adam_beta2,
                         config.adam_epsilon);
  if (adam.snapshot().first_moment.size() != result.field.parameters().size()) {
    fail(ErrorCode::InvalidArgument, "train: optimizer state does not match the field");
  }

  SurfelCloud& cloud = result.cloud;
  const SurfelCloud& initial = resume && resume->initial_cloud ? *resume->initial_cloud : input;
  if (initial.size() != cloud.size()) fail(ErrorCode::InvalidArgument, "train: resume cloud size differs");
  const std::vector<double> sigmas = query_sigmas(initial, config.sampler.knn_k);
  const std::vector<std::size_t> root_counts = allocate_roots(initial, config.sampler);
  const std::int64_t far_only_until = config.resolved_far_only_until();

  Eigen::VectorXd grad(result.field.parameters().size());
  std::int64_t degenerate_streak = 0;

  for (std::int64_t it = result.iteration; it < config.total_iters; ++it) {
    MetricRecord record;
    record.iter = it;
    record.lr = cosine_lr(config.lr0, it, config.total_iters);
    const bool joint = it >= far_only_until;
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(it)));

    const auto batch = choose_batch(cloud.size(), config.sampler.planes_per_batch, rng);
    PointSet batch_centers;
    batch_centers.reserve(batch.size());
    for (const std::size_t i : batch) batch_centers.push_back(cloud.surfels[i].center);
    const auto query_samples = sample_queries(cloud, sigmas, batch, config.sampler, rng);
    PointSet queries;
    queries.reserve(query_samples.size());
    for (const auto& q : query_samples) queries.push_back(q.q);

    grad.setZero();
    const FarLossResult far = loss_far_gradient(result.field, queries, batch_centers, config.lambda_far,
                                                config.gradient_mode, config.grad_eps, grad);
    record.degenerate_fraction = far.degenerate_fraction();
    if (!far.skipped) record.l_far = far.value;

    if (joint && config.lambda_near > 0.0) {
      std::vector<PlaneSample> plane_samples;
      for (const std::size_t i : batch) {
        const Surfel& s = cloud.surfels[i];
        const auto roots = sample_plane_roots(s, root_counts[i], rng);
        const auto samples = sample_offsets(s, i, roots, config.sampler, rng);
        plane_samples.insert(plane_samples.end(), samples.begin(), samples.end());
      }
      record.l_near = loss_near_gradient(result.field, plane_samples, config.lambda_near, grad);
    }

    record.step_skipped = !adam.step(result.field.mutable_parameters(), grad, record.lr);

    if (joint && config.lambda_proj > 0.0) {
      const double eta = std::clamp(config.lambda_proj * record.lr / config.lr0, 0.0, 1.0);
      record.l_proj = project_surfels(result.field, cloud, eta, batch, config.grad_eps).l_proj;
    }

    result.iteration = it + 1;
    result.log.push_back(record);
    if (hooks.on_record) hooks.on_record(record);

    degenerate_streak = record.degenerate_fraction > config.degenerate_abort_fraction ? degenerate_streak + 1 : 0;
    if (degenerate_streak >= config.degenerate_abort_window) {
      result.aborted = true;
      result.abort_reason = "more than " + std::to_string(config.degenerate_abort_fraction * 100.0) +
                            "% of queries degenerate for " + std::to_string(config.degenerate_abort_window) +
                            " consecutive iterations";
      break;
    }
    if (config.checkpoint_every > 0 && result.iteration % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint({result.field, cloud, adam.snapshot(), result.iteration});
    }
  }
  result.optimizer = adam.snapshot();
  return result;
}

}  // namespace udf
