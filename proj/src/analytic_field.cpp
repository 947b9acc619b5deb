#include <algorithm>
#include <cmath>
#include <numbers>

#include "udfforge/error.hpp"
#include "udfforge/field.hpp"

namespace udf {

namespace {

double sign_plus(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double wrap_angle(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

}  // namespace

std::string to_string(AnalyticKind kind) {
  switch (kind) {
    case AnalyticKind::Plane: return "plane";
    case AnalyticKind::Sphere: return "sphere";
    case AnalyticKind::Disk: return "disk";
    case AnalyticKind::ParallelPlanes: return "parallel_planes";
    case AnalyticKind::CylinderPatch: return "cylinder_patch";
  }
  return "unknown";
}

AnalyticKind analytic_kind_from_string(const std::string& name) {
  if (name == "plane") return AnalyticKind::Plane;
  if (name == "sphere") return AnalyticKind::Sphere;
  if (name == "disk") return AnalyticKind::Disk;
  if (name == "parallel_planes") return AnalyticKind::ParallelPlanes;
  if (name == "cylinder_patch") return AnalyticKind::CylinderPatch;
  fail(ErrorCode::InvalidArgument, "unknown analytic field kind '" + name + "'");
}

AnalyticField::AnalyticField(AnalyticKind kind, Params params) : kind_(kind), params_(params) {
  if (params_.normal.norm() == 0.0) fail(ErrorCode::InvalidArgument, "analytic field: zero normal");
  params_.normal.normalize();
  if (!(params_.radius > 0.0)) fail(ErrorCode::InvalidArgument, "analytic field: radius must be positive");
}

AnalyticField AnalyticField::plane(const Vec3& normal, double offset) {
  Params p;
  p.normal = normal;
  p.offset = offset;
  return {AnalyticKind::Plane, p};
}

AnalyticField AnalyticField::sphere(const Vec3& center, double radius) {
  Params p;
  p.center = center;
  p.radius = radius;
  return {AnalyticKind::Sphere, p};
}

AnalyticField AnalyticField::disk(const Vec3& center, const Vec3& normal, double radius) {
  Params p;
  p.center = center;
  p.normal = normal;
  p.radius = radius;
  return {AnalyticKind::Disk, p};
}

AnalyticField AnalyticField::parallel_planes(const Vec3& normal, double half_gap) {
  Params p;
  p.normal = normal;
  p.half_gap = half_gap;
  return {AnalyticKind::ParallelPlanes, p};
}

AnalyticField AnalyticField::cylinder_patch(const Vec3& axis_point, double radius,
                                            double half_angle, double half_length) {
  Params p;
  p.center = axis_point;
  p.radius = radius;
  p.half_angle = half_angle;
  p.half_length = half_length;
  return {AnalyticKind::CylinderPatch, p};
}

AnalyticField AnalyticField::shifted(double delta) const {
  Params p = params_;
  p.shift += delta;
  return {kind_, p};
}

FieldGradient AnalyticField::distance(const Vec3& p) const {
  if (!all_finite(p)) fail(ErrorCode::InvalidArgument, "non-finite query point");
  const Params& k = params_;
  FieldGradient out;
  switch (kind_) {
    case AnalyticKind::Plane: {
      const double h = k.normal.dot(p) - k.offset;
      out.value = std::abs(h);
      out.grad = sign_plus(h) * k.normal;
      break;
    }
    case AnalyticKind::Sphere: {
      const Vec3 v = p - k.center;
      const double r = v.norm();
      out.value = std::abs(r - k.radius);
      out.grad = r > 0.0 ? Vec3(sign_plus(r - k.radius) * v / r) : Vec3::Zero();
      break;
    }
    case AnalyticKind::Disk: {
      const Vec3 v = p - k.center;
      const double h = k.normal.dot(v);
      const Vec3 radial = v - h * k.normal;
      const double rho = radial.norm();
      if (rho <= k.radius) {
        out.value = std::abs(h);
        out.grad = sign_plus(h) * k.normal;
      } else {
        const Vec3 d = (rho - k.radius) * (radial / rho) + h * k.normal;
        out.value = d.norm();
        out.grad = d / out.value;
      }
      break;
    }
    case AnalyticKind::ParallelPlanes: {
      const double h = k.normal.dot(p);
      const double upper = h - k.half_gap;
      const double lower = h + k.half_gap;
      // The medial plane h = 0 belongs to the upper sheet.
      const double nearest = std::abs(upper) <= std::abs(lower) ? upper : lower;
      out.value = std::abs(nearest);
      out.grad = sign_plus(nearest) * k.normal;
      break;
    }
    case AnalyticKind::CylinderPatch: {
      // Axis along y through center; the sheet is center + R (sin t, y, cos t).
      const Vec3 v = p - k.center;
      const double theta = std::atan2(v.x(), v.z());
      double t = theta;
      if (std::abs(theta) > k.half_angle) {
        const double to_hi = std::abs(wrap_angle(theta - k.half_angle));
        const double to_lo = std::abs(wrap_angle(theta + k.half_angle));
        t = to_hi <= to_lo ? k.half_angle : -k.half_angle;
      }
      const double y = std::clamp(v.y(), -k.half_length, k.half_length);
      const Vec3 closest(k.radius * std::sin(t), y, k.radius * std::cos(t));
      const Vec3 d = v - closest;
      out.value = d.norm();
      if (out.value > 0.0) {
        out.grad = d / out.value;
      } else {
        out.grad = Vec3(std::sin(t), 0.0, std::cos(t));
      }
      break;
    }
  }
  out.value += k.shift;
  return out;
}

double AnalyticField::eval(const Vec3& p) const { return distance(p).value; }

FieldGradient AnalyticField::eval_with_grad(const Vec3& p) const { return distance(p); }

double AnalyticField::kink_margin(const Vec3& p) const {
  const double f = distance(p).value - params_.shift;
  const Params& k = params_;
  switch (kind_) {
    case AnalyticKind::Plane:
    case AnalyticKind::Disk:
      return f;
    case AnalyticKind::Sphere:
      return std::min(f, (p - k.center).norm());
    case AnalyticKind::ParallelPlanes:
      return std::min(f, std::abs(k.normal.dot(p)));
    case AnalyticKind::CylinderPatch: {
      const Vec3 v = p - k.center;
      const double rho = std::hypot(v.x(), v.z());
      const double theta = std::atan2(v.x(), v.z());
      // Medial half-plane opposite the sheet, where both rims are equidistant.
      const double opposite = rho * std::abs(std::sin(wrap_angle(theta - std::numbers::pi) / 2.0));
      return std::min({f, rho, opposite});
    }
  }
  return f;
}

std::unique_ptr<Field> AnalyticField::clone() const { return std::make_unique<AnalyticField>(*this); }

}  // namespace udf
