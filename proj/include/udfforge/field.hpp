#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "udfforge/types.hpp"

namespace udf {

/// Value and input-space gradient of a field at one point.
struct FieldGradient {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
};

/// A scalar field R^3 -> R>=0. Implementations are immutable after
/// construction, so every const member is safe to call concurrently.
class Field {
 public:
  virtual ~Field() = default;

  virtual double eval(const Vec3& p) const = 0;
  virtual FieldGradient eval_with_grad(const Vec3& p) const = 0;

  /// Batched evaluation. The default loops over eval().
  virtual void eval_batch(std::span<const Vec3> points,
                          std::span<double> values) const;
  virtual void eval_with_grad_batch(std::span<const Vec3> points,
                                    std::span<double> values,
                                    std::span<Vec3> grads) const;

  /// Non-negative margin to the nearest non-smooth locus of the field, zero on
  /// it. Analytic fields report a Euclidean distance to their kinks and medial
  /// sets; neural fields report the smallest |pre-activation|.
  virtual double kink_margin(const Vec3& p) const = 0;

  virtual std::unique_ptr<Field> clone() const = 0;
};

// ---------------------------------------------------------------------------
// Neural field

struct FieldArch {
  int num_layers = 8;  // linear layers, including the output layer
  int hidden_width = 256;
  int encoding_frequencies = 6;

  int encoded_dim() const { return 3 + 6 * encoding_frequencies; }

  /// Widths of every activation, input encoding first and scalar output last.
  std::vector<int> layer_widths() const;
  std::size_t parameter_count() const;

  /// Throws Error(InvalidArgument) on impossible dimensions.
  void validate() const;

  bool operator==(const FieldArch&) const = default;
};

/// Positional encoding: p followed by sin(2^k pi p), cos(2^k pi p) for
/// k = 0..frequencies-1, each block covering x, y, z.
Eigen::VectorXd encode(const Vec3& p, int frequencies);

/// Coordinate MLP with rectifier hidden activations and an absolute-value
/// output. Parameters live in one flat vector; layer l stores its weight
/// matrix (out x in, column-major) followed by its bias.
class NeuralField final : public Field {
 public:
  NeuralField(FieldArch arch, std::uint64_t seed, Eigen::VectorXd params);

  /// Fan-in scaled zero-mean normal initialisation, zero biases.
  static NeuralField initialize(const FieldArch& arch, std::uint64_t seed);

  const FieldArch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& mutable_parameters() { return params_; }

  double eval(const Vec3& p) const override;
  FieldGradient eval_with_grad(const Vec3& p) const override;
  void eval_batch(std::span<const Vec3> points,
                  std::span<double> values) const override;
  void eval_with_grad_batch(std::span<const Vec3> points,
                            std::span<double> values,
                            std::span<Vec3> grads) const override;
  double kink_margin(const Vec3& p) const override;
  std::unique_ptr<Field> clone() const override;

  /// Gradient of sum_i upstream[i] * f(points[i]) with respect to every
  /// parameter.
  Eigen::VectorXd backward(std::span<const Vec3> points,
                           std::span<const double> upstream) const;

  /// Adds d/dtheta sum_i (upstream[i] * f(p_i) + tangents[i] . grad f(p_i))
  /// to `grad`. `tangents` may be empty, in which case only the value term is
  /// differentiated.
  void accumulate_parameter_gradient(std::span<const Vec3> points,
                                     std::span<const double> upstream,
                                     std::span<const Vec3> tangents,
                                     Eigen::VectorXd& grad) const;

  /// Smallest |pre-activation| over all hidden units and the output unit.
  double min_abs_preactivation(const Vec3& p) const;

  /// Sign pattern of every pre-activation (1 where > 0). Two points with equal
  /// patterns lie in the same linear region of the rectifier stack.
  std::vector<std::uint8_t> activation_pattern(const Vec3& p) const;

 private:
  struct Layer {
    std::size_t weight_offset;
    std::size_t bias_offset;
    int in;
    int out;
  };

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;

  // Forward pass over a chunk, keeping pre-activations and activations.
  void forward(const Eigen::Matrix3Xd& x, std::vector<Eigen::MatrixXd>& pre,
               std::vector<Eigen::MatrixXd>& act) const;

  FieldArch arch_;
  std::uint64_t seed_;
  Eigen::VectorXd params_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Analytic oracle fields

enum class AnalyticKind {
  Plane,           // |n.p - offset|
  Sphere,          // ||p - c| - R|
  Disk,            // open planar disk patch
  ParallelPlanes,  // two planes n.p = +-half_gap
  CylinderPatch,   // open cylindrical sheet, axis along y
};

std::string to_string(AnalyticKind kind);
AnalyticKind analytic_kind_from_string(const std::string& name);

/// Exact unsigned distance to a simple shape. Gradients follow the same kink
/// convention as the neural field: d|x|/dx at 0 is +1.
class AnalyticField final : public Field {
 public:
  struct Params {
    Vec3 center = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    double radius = 1.0;
    double offset = 0.0;      // plane offset along normal
    double half_gap = 0.25;   // parallel planes
    double half_angle = 0.6;  // cylinder patch, radians
    double half_length = 0.8; // cylinder patch extent along y
    double shift = 0.0;       // constant added to the distance (testing aid)
  };

  AnalyticField(AnalyticKind kind, Params params);

  static AnalyticField plane(const Vec3& normal = Vec3::UnitZ(),
                             double offset = 0.0);
  static AnalyticField sphere(const Vec3& center, double radius);
  static AnalyticField disk(const Vec3& center, const Vec3& normal,
                            double radius);
  static AnalyticField parallel_planes(const Vec3& normal, double half_gap);
  static AnalyticField cylinder_patch(const Vec3& axis_point, double radius,
                                      double half_angle, double half_length);

  AnalyticKind kind() const { return kind_; }
  const Params& params() const { return params_; }

  /// Copy with a constant added to every value.
  AnalyticField shifted(double delta) const;

  double eval(const Vec3& p) const override;
  FieldGradient eval_with_grad(const Vec3& p) const override;
  double kink_margin(const Vec3& p) const override;
  std::unique_ptr<Field> clone() const override;

 private:
  FieldGradient distance(const Vec3& p) const;

  AnalyticKind kind_;
  Params params_;
};

}  // namespace udf
