#include "udfforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "udfforge/error.hpp"
#include "udfforge/geometry.hpp"
#include "udfforge/kdtree.hpp"

namespace udf {

namespace {

double directed(const PointSet& from, const KdTree& to, ChamferMode mode) {
  double sum = 0.0;
  for (const auto& p : from) {
    const double d2 = to.nearest(p).dist2;
    sum += mode == ChamferMode::Squared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(from.size());
}

double rel_err(const Vec3& a, const Vec3& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

Vec3 central_difference(const Field& field, const Vec3& p, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p;
    Vec3 hi = p;
    lo[a] -= h;
    hi[a] += h;
    g[a] = (field.eval(hi) - field.eval(lo)) / (2.0 * h);
  }
  return g;
}

bool stable_neural_point(const NeuralField& field, const Vec3& p, double h) {
  if (field.min_abs_preactivation(p) < 1e-6) return false;
  const auto pattern = field.activation_pattern(p);
  for (int a = 0; a < 3; ++a) {
    for (const double s : {-h, h}) {
      Vec3 q = p;
      q[a] += s;
      if (field.activation_pattern(q) != pattern) return false;
    }
  }
  return true;
}

}  // namespace

std::string to_string(ChamferMode mode) { return mode == ChamferMode::Squared ? "squared" : "euclidean"; }

ChamferMode chamfer_mode_from_string(const std::string& name) {
  if (name == "squared") return ChamferMode::Squared;
  if (name == "euclidean") return ChamferMode::Euclidean;
  fail(ErrorCode::InvalidArgument, "unknown chamfer mode '" + name + "'");
}

double chamfer(const PointSet& a, const PointSet& b, ChamferMode mode) {
  if (a.empty() || b.empty()) fail(ErrorCode::InvalidArgument, "chamfer: empty point set");
  const KdTree ta(a);
  const KdTree tb(b);
  return directed(a, tb, mode) + directed(b, ta, mode);
}

UdfError udf_error(const Field& field, const Field& oracle, const BBox& bbox, const Resolution& resolution,
                   double band) {
  if (!(band > 0.0)) fail(ErrorCode::InvalidArgument, "udf_error: band must be positive");
  const Grid truth = eval_grid(oracle, bbox, resolution);
  const Grid learned = eval_grid(field, bbox, resolution);
  UdfError out;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    if (!(truth.values[i] < band)) continue;
    const double e = std::abs(learned.values[i] - truth.values[i]);
    sum += e;
    out.max = std::max(out.max, e);
    ++out.count;
  }
  if (out.count == 0) fail(ErrorCode::InvalidArgument, "udf_error: no lattice point lies inside the band");
  out.mae = sum / static_cast<double>(out.count);
  return out;
}

GradCheckResult grad_check(const Field& field, std::size_t n, Rng& rng, const BBox& bbox, double h) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "grad_check: n must be >= 1");
  if (!(h > 0.0)) fail(ErrorCode::InvalidArgument, "grad_check: step must be positive");
  const auto* neural = dynamic_cast<const NeuralField*>(&field);
  GradCheckResult out;
  const std::size_t max_draws = 100 * n;
  for (std::size_t draw = 0; draw < max_draws && out.accepted < n; ++draw) {
    const Vec3 p = rng.uniform_in(bbox);
    const bool ok = neural ? stable_neural_point(*neural, p, h) : field.kink_margin(p) > 10.0 * h;
    if (!ok) {
      ++out.skipped;
      continue;
    }
    out.max_rel_err = std::max(out.max_rel_err, rel_err(field.eval_with_grad(p).grad, central_difference(field, p, h)));
    ++out.accepted;
  }
  if (out.accepted == 0) fail(ErrorCode::Runtime, "grad_check: every candidate point was near a kink");
  return out;
}

GradCheckResult param_grad_check(const NeuralField& field, std::size_t n_params, Rng& rng, const BBox& bbox,
                                 double h) {
  if (n_params == 0) fail(ErrorCode::InvalidArgument, "param_grad_check: n_params must be >= 1");
  const auto count = static_cast<std::size_t>(field.parameters().size());
  GradCheckResult out;
  NeuralField probe = field;
  const std::size_t max_draws = 100 * n_params;
  for (std::size_t draw = 0; draw < max_draws && out.accepted < n_params; ++draw) {
    const Vec3 p = rng.uniform_in(bbox);
    const std::size_t k = rng.index(count);
    const double upstream = 1.0;
    const Eigen::VectorXd analytic = field.backward(std::span<const Vec3>(&p, 1), std::span<const double>(&upstream, 1));

    const auto pattern = field.activation_pattern(p);
    double value[2];
    bool stable = field.min_abs_preactivation(p) >= 1e-6;
    for (int s = 0; s < 2 && stable; ++s) {
      probe.mutable_parameters() = field.parameters();
      probe.mutable_parameters()[static_cast<Eigen::Index>(k)] += s == 0 ? -h : h;
      stable = probe.activation_pattern(p) == pattern;
      value[s] = probe.eval(p);
    }
    if (!stable) {
      ++out.skipped;
      continue;
    }
    const double fd = (value[1] - value[0]) / (2.0 * h);
    out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[static_cast<Eigen::Index>(k)], fd));
    ++out.accepted;
  }
  if (out.accepted == 0) fail(ErrorCode::Runtime, "param_grad_check: every candidate was near a kink");
  return out;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  auto opt = [](const auto& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  j["chamfer"] = opt(r.chamfer);
  j["chamfer_mode"] = r.chamfer_mode;
  j["surface_points"] = r.surface_points;
  j["udf_mae_band"] = opt(r.udf_mae_band);
  j["udf_max_band"] = opt(r.udf_max_band);
  j["band"] = r.band;
  j["grad_check_max_rel_err"] = opt(r.grad_check_max_rel_err);
  j["boundary_loop_count"] = opt(r.boundary_loop_count);
  j["config"] = r.config;
  return j;
}

std::string format_report(const EvalReport& r) {
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return std::string(buf);
  };
  std::string out;
  auto row = [&](const std::string& key, const std::string& value) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-24s %s\n", key.c_str(), value.c_str());
    out += buf;
  };
  row("chamfer (" + r.chamfer_mode + ")", num(r.chamfer));
  row("surface points", std::to_string(r.surface_points));
  row("udf mae (band)", num(r.udf_mae_band));
  row("udf max (band)", num(r.udf_max_band));
  row("band", num(r.band));
  row("grad check max rel err", num(r.grad_check_max_rel_err));
  row("boundary loops", r.boundary_loop_count ? std::to_string(*r.boundary_loop_count) : "-");
  return out;
}

}  // namespace udf
