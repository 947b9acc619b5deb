#include "udfforge/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "udfforge/error.hpp"
#include "udfforge/rng.hpp"

namespace udf {

namespace {

// Columns per forward chunk. Every chunk is padded to exactly this many columns
// so the matrix products have the same shape whatever the batch size, which
// makes a point's value independent of the batch it is evaluated in.
constexpr std::size_t kChunk = 64;

double frequency(int k) { return std::ldexp(std::numbers::pi, k); }

void require_finite(std::span<const Vec3> points) {
  for (const auto& p : points) {
    if (!all_finite(p)) fail(ErrorCode::InvalidArgument, "non-finite query point");
  }
}

Eigen::Matrix3Xd gather(std::span<const Vec3> points, std::size_t begin,
                        std::size_t end) {
  Eigen::Matrix3Xd x = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(kChunk));
  for (std::size_t i = begin; i < end; ++i) x.col(static_cast<Eigen::Index>(i - begin)) = points[i];
  return x;
}

// Encodes every column of x into the rows of `out`.
void encode_batch(const Eigen::Matrix3Xd& x, int frequencies, Eigen::MatrixXd& out) {
  const Eigen::Index n = x.cols();
  out.resize(3 + 6 * frequencies, n);
  out.topRows(3) = x;
  for (int k = 0; k < frequencies; ++k) {
    const double w = frequency(k);
    const Eigen::Index row = 3 + 6 * k;
    out.middleRows(row, 3) = (w * x.array()).sin().matrix();
    out.middleRows(row + 3, 3) = (w * x.array()).cos().matrix();
  }
}

// Pulls a gradient with respect to the encoding back to the raw coordinates.
Eigen::Matrix3Xd encoding_pullback(const Eigen::MatrixXd& d_enc,
                                   const Eigen::MatrixXd& enc, int frequencies) {
  Eigen::Matrix3Xd g = d_enc.topRows(3);
  for (int k = 0; k < frequencies; ++k) {
    const double w = frequency(k);
    const Eigen::Index row = 3 + 6 * k;
    g.array() += w * (d_enc.middleRows(row, 3).array() * enc.middleRows(row + 3, 3).array() -
                      d_enc.middleRows(row + 3, 3).array() * enc.middleRows(row, 3).array());
  }
  return g;
}

// Pushes tangent vectors v through the encoding (Jacobian-vector product).
Eigen::MatrixXd encoding_pushforward(const Eigen::Matrix3Xd& v, const Eigen::MatrixXd& enc,
                                     int frequencies) {
  Eigen::MatrixXd t(enc.rows(), enc.cols());
  t.topRows(3) = v;
  for (int k = 0; k < frequencies; ++k) {
    const double w = frequency(k);
    const Eigen::Index row = 3 + 6 * k;
    t.middleRows(row, 3) = (w * enc.middleRows(row + 3, 3).array() * v.array()).matrix();
    t.middleRows(row + 3, 3) = (-w * enc.middleRows(row, 3).array() * v.array()).matrix();
  }
  return t;
}

Eigen::ArrayXXd relu_mask(const Eigen::MatrixXd& pre) {
  return (pre.array() > 0.0).cast<double>();
}

// d|z|/dz with the +1 convention at zero.
Eigen::RowVectorXd abs_derivative(const Eigen::MatrixXd& z) {
  return (z.array() >= 0.0).select(Eigen::RowVectorXd::Ones(z.cols()),
                                   -Eigen::RowVectorXd::Ones(z.cols()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Field defaults

void Field::eval_batch(std::span<const Vec3> points, std::span<double> values) const {
  if (points.size() != values.size()) fail(ErrorCode::InvalidArgument, "eval_batch: size mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) values[i] = eval(points[i]);
}

void Field::eval_with_grad_batch(std::span<const Vec3> points, std::span<double> values,
                                 std::span<Vec3> grads) const {
  if (points.size() != values.size() || points.size() != grads.size()) {
    fail(ErrorCode::InvalidArgument, "eval_with_grad_batch: size mismatch");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const FieldGradient g = eval_with_grad(points[i]);
    values[i] = g.value;
    grads[i] = g.grad;
  }
}

// ---------------------------------------------------------------------------
// Architecture

std::vector<int> FieldArch::layer_widths() const {
  std::vector<int> widths;
  widths.push_back(encoded_dim());
  for (int l = 0; l + 1 < num_layers; ++l) widths.push_back(hidden_width);
  widths.push_back(1);
  return widths;
}

std::size_t FieldArch::parameter_count() const {
  const auto widths = layer_widths();
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    count += static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]) +
             static_cast<std::size_t>(widths[l + 1]);
  }
  return count;
}

void FieldArch::validate() const {
  if (num_layers < 2) fail(ErrorCode::InvalidArgument, "arch: num_layers must be >= 2");
  if (hidden_width < 1) fail(ErrorCode::InvalidArgument, "arch: hidden_width must be >= 1");
  if (encoding_frequencies < 0 || encoding_frequencies > 30) {
    fail(ErrorCode::InvalidArgument, "arch: encoding_frequencies must be in [0, 30]");
  }
}

Eigen::VectorXd encode(const Vec3& p, int frequencies) {
  if (frequencies < 0) fail(ErrorCode::InvalidArgument, "encode: negative frequency count");
  Eigen::Matrix3Xd x(3, 1);
  x.col(0) = p;
  Eigen::MatrixXd out;
  encode_batch(x, frequencies, out);
  return out.col(0);
}

// ---------------------------------------------------------------------------
// NeuralField

NeuralField::NeuralField(FieldArch arch, std::uint64_t seed, Eigen::VectorXd params)
    : arch_(arch), seed_(seed), params_(std::move(params)) {
  arch_.validate();
  if (static_cast<std::size_t>(params_.size()) != arch_.parameter_count()) {
    fail(ErrorCode::InvalidArgument, "parameter vector length " + std::to_string(params_.size()) +
                                         " does not match architecture (" +
                                         std::to_string(arch_.parameter_count()) + ")");
  }
  const auto widths = arch_.layer_widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer{};
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out);
    layer.bias_offset = offset;
    offset += static_cast<std::size_t>(layer.out);
    layers_.push_back(layer);
  }
}

NeuralField NeuralField::initialize(const FieldArch& arch, std::uint64_t seed) {
  arch.validate();
  Eigen::VectorXd params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
  Rng rng(seed);
  const auto widths = arch.layer_widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    const double stddev = std::sqrt((last ? 1.0 : 2.0) / widths[l]);
    const std::size_t n = static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]);
    for (std::size_t i = 0; i < n; ++i) params[static_cast<Eigen::Index>(offset + i)] = stddev * rng.normal();
    offset += n + static_cast<std::size_t>(widths[l + 1]);
  }
  return NeuralField(arch, seed, std::move(params));
}

Eigen::Map<const Eigen::MatrixXd> NeuralField::weight(std::size_t l) const {
  const Layer& layer = layers_[l];
  return {params_.data() + layer.weight_offset, layer.out, layer.in};
}

Eigen::Map<const Eigen::VectorXd> NeuralField::bias(std::size_t l) const {
  const Layer& layer = layers_[l];
  return {params_.data() + layer.bias_offset, layer.out};
}

void NeuralField::forward(const Eigen::Matrix3Xd& x, std::vector<Eigen::MatrixXd>& pre,
                          std::vector<Eigen::MatrixXd>& act) const {
  const std::size_t L = layers_.size();
  pre.resize(L);
  act.resize(L);
  encode_batch(x, arch_.encoding_frequencies, act[0]);
  for (std::size_t l = 0; l < L; ++l) {
    pre[l].noalias() = weight(l) * act[l];
    pre[l].colwise() += bias(l);
    if (l + 1 < L) act[l + 1] = pre[l].cwiseMax(0.0);
  }
}

double NeuralField::eval(const Vec3& p) const {
  double v = 0.0;
  eval_batch(std::span<const Vec3>(&p, 1), std::span<double>(&v, 1));
  return v;
}

FieldGradient NeuralField::eval_with_grad(const Vec3& p) const {
  FieldGradient out;
  eval_with_grad_batch(std::span<const Vec3>(&p, 1), std::span<double>(&out.value, 1),
                       std::span<Vec3>(&out.grad, 1));
  return out;
}

void NeuralField::eval_batch(std::span<const Vec3> points, std::span<double> values) const {
  if (points.size() != values.size()) fail(ErrorCode::InvalidArgument, "eval_batch: size mismatch");
  require_finite(points);
  std::vector<Eigen::MatrixXd> pre, act;
  for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
    const std::size_t end = std::min(points.size(), begin + kChunk);
    forward(gather(points, begin, end), pre, act);
    const Eigen::MatrixXd& z = pre.back();
    for (std::size_t i = begin; i < end; ++i) values[i] = std::abs(z(0, static_cast<Eigen::Index>(i - begin)));
  }
}

void NeuralField::eval_with_grad_batch(std::span<const Vec3> points, std::span<double> values,
                                       std::span<Vec3> grads) const {
  if (points.size() != values.size() || points.size() != grads.size()) {
    fail(ErrorCode::InvalidArgument, "eval_with_grad_batch: size mismatch");
  }
  require_finite(points);
  const std::size_t L = layers_.size();
  std::vector<Eigen::MatrixXd> pre, act;
  for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
    const std::size_t end = std::min(points.size(), begin + kChunk);
    forward(gather(points, begin, end), pre, act);
    Eigen::MatrixXd delta = abs_derivative(pre.back());
    for (std::size_t l = L - 1; l >= 1; --l) {
      Eigen::MatrixXd back = weight(l).transpose() * delta;
      delta = (back.array() * relu_mask(pre[l - 1])).matrix();
    }
    const Eigen::MatrixXd d_enc = weight(0).transpose() * delta;
    const Eigen::Matrix3Xd g = encoding_pullback(d_enc, act[0], arch_.encoding_frequencies);
    for (std::size_t i = begin; i < end; ++i) {
      const auto c = static_cast<Eigen::Index>(i - begin);
      values[i] = std::abs(pre.back()(0, c));
      grads[i] = g.col(c);
    }
  }
}

Eigen::VectorXd NeuralField::backward(std::span<const Vec3> points,
                                      std::span<const double> upstream) const {
  if (points.empty()) fail(ErrorCode::InvalidArgument, "backward: empty batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  accumulate_parameter_gradient(points, upstream, {}, grad);
  return grad;
}

void NeuralField::accumulate_parameter_gradient(std::span<const Vec3> points,
                                                std::span<const double> upstream,
                                                std::span<const Vec3> tangents,
                                                Eigen::VectorXd& grad) const {
  if (points.size() != upstream.size()) {
    fail(ErrorCode::InvalidArgument, "backward: " + std::to_string(points.size()) + " points but " +
                                         std::to_string(upstream.size()) + " upstream gradients");
  }
  if (!tangents.empty() && tangents.size() != points.size()) {
    fail(ErrorCode::InvalidArgument, "backward: tangent count does not match point count");
  }
  if (grad.size() != params_.size()) fail(ErrorCode::InvalidArgument, "backward: gradient has wrong length");
  require_finite(points);

  const std::size_t L = layers_.size();
  const bool with_tangent = !tangents.empty();
  std::vector<Eigen::MatrixXd> pre, act, tan(L);
  for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
    const std::size_t end = std::min(points.size(), begin + kChunk);
    const auto n = static_cast<Eigen::Index>(end - begin);
    forward(gather(points, begin, end), pre, act);
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(kChunk));
    a.head(n) = Eigen::Map<const Eigen::RowVectorXd>(upstream.data() + begin, n);

    if (with_tangent) {
      tan[0] = encoding_pushforward(gather(tangents, begin, end), act[0], arch_.encoding_frequencies);
      for (std::size_t l = 0; l + 1 < L; ++l) {
        Eigen::MatrixXd z = weight(l) * tan[l];
        tan[l + 1] = (z.array() * relu_mask(pre[l])).matrix();
      }
    }

    Eigen::MatrixXd delta = abs_derivative(pre.back());
    for (std::size_t l = L; l-- > 0;) {
      const Layer& layer = layers_[l];
      Eigen::MatrixXd input = act[l] * a.asDiagonal();
      if (with_tangent) input += tan[l];
      Eigen::Map<Eigen::MatrixXd> gw(grad.data() + layer.weight_offset, layer.out, layer.in);
      Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.bias_offset, layer.out);
      gw.noalias() += delta * input.transpose();
      gb.noalias() += delta * a.transpose();
      if (l > 0) {
        Eigen::MatrixXd back = weight(l).transpose() * delta;
        delta = (back.array() * relu_mask(pre[l - 1])).matrix();
      }
    }
  }
}

double NeuralField::min_abs_preactivation(const Vec3& p) const {
  std::vector<Eigen::MatrixXd> pre, act;
  forward(gather(std::span<const Vec3>(&p, 1), 0, 1), pre, act);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& z : pre) m = std::min(m, z.col(0).cwiseAbs().minCoeff());
  return m;
}

std::vector<std::uint8_t> NeuralField::activation_pattern(const Vec3& p) const {
  std::vector<Eigen::MatrixXd> pre, act;
  forward(gather(std::span<const Vec3>(&p, 1), 0, 1), pre, act);
  std::vector<std::uint8_t> pattern;
  for (const auto& z : pre) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) pattern.push_back(z(i, 0) > 0.0 ? 1 : 0);
  }
  return pattern;
}

double NeuralField::kink_margin(const Vec3& p) const { return min_abs_preactivation(p); }

std::unique_ptr<Field> NeuralField::clone() const { return std::make_unique<NeuralField>(*this); }

}  // namespace udf
