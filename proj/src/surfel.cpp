#include "udfforge/surfel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "udfforge/binary_io.hpp"
#include "udfforge/error.hpp"
#include "udfforge/kdtree.hpp"

namespace udf {

namespace {

constexpr char kBinaryMagic[8] = {'S', 'U', 'R', 'F', 'E', 'L', 'B', '1'};
constexpr double kRotationTol = 1e-6;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

SurfelCloud load_binary(std::ifstream& in, const std::string& path) {
  std::uint64_t count = 0;
  if (!io::read_u64_le(in, count)) fail(ErrorCode::Parse, path + ": truncated binary header");
  SurfelCloud cloud;
  cloud.surfels.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t r = 0; r < count; ++r) {
    double v[18];
    for (double& x : v) {
      if (!io::read_f64_le(in, x)) {
        fail(ErrorCode::Parse, path + ": record " + std::to_string(r) + ": truncated");
      }
    }
    Surfel s;
    s.center = {v[0], v[1], v[2]};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.rotation(i, j) = v[3 + 3 * i + j];
    s.scales = {v[12], v[13]};
    s.opacity = v[14];
    if (!std::isnan(v[15])) s.color = Vec3(v[15], v[16], v[17]);
    validate_surfel(s, path + ": record " + std::to_string(r));
    cloud.surfels.push_back(s);
  }
  return cloud;
}

SurfelCloud load_text(std::ifstream& in, const std::string& path) {
  SurfelCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!have_header) {
      if (tokens.size() != 3 || tokens[0] != "surfelcloud" || tokens[1] != "v1") {
        fail(ErrorCode::Parse, where + ": expected header 'surfelcloud v1 <count>'");
      }
      try {
        std::size_t pos = 0;
        expected = std::stoull(tokens[2], &pos);
        if (pos != tokens[2].size()) throw std::invalid_argument("count");
      } catch (const std::exception&) {
        fail(ErrorCode::Parse, where + ": malformed surfel count '" + tokens[2] + "'");
      }
      have_header = true;
      continue;
    }
    if (tokens.size() != 14 && tokens.size() != 15 && tokens.size() != 18) {
      fail(ErrorCode::Parse, where + ": expected 14, 15 or 18 fields, got " + std::to_string(tokens.size()));
    }
    std::vector<double> v(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      try {
        std::size_t pos = 0;
        v[i] = std::stod(tokens[i], &pos);
        if (pos != tokens[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(ErrorCode::Parse, where + ": field " + std::to_string(i + 1) + " is not a number: '" + tokens[i] + "'");
      }
    }
    Surfel s;
    s.center = {v[0], v[1], v[2]};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.rotation(i, j) = v[static_cast<std::size_t>(3 + 3 * i + j)];
    s.scales = {v[12], v[13]};
    if (v.size() >= 15) s.opacity = v[14];
    if (v.size() == 18) s.color = Vec3(v[15], v[16], v[17]);
    validate_surfel(s, where + " (surfel " + std::to_string(cloud.surfels.size()) + ")");
    cloud.surfels.push_back(s);
  }
  if (!have_header) fail(ErrorCode::Parse, path + ": missing 'surfelcloud v1 <count>' header");
  if (cloud.surfels.size() != expected) {
    fail(ErrorCode::Parse, path + ": header declares " + std::to_string(expected) + " surfels but file has " +
                               std::to_string(cloud.surfels.size()));
  }
  return cloud;
}

}  // namespace

PointSet SurfelCloud::centers() const {
  PointSet out;
  out.reserve(surfels.size());
  for (const auto& s : surfels) out.push_back(s.center);
  return out;
}

void validate_surfel(const Surfel& s, const std::string& where) {
  if (!s.center.allFinite() || !s.rotation.allFinite() || !s.scales.allFinite()) {
    fail(ErrorCode::InvalidArgument, where + ": non-finite value");
  }
  const double ortho = (s.rotation.transpose() * s.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho < kRotationTol)) {
    fail(ErrorCode::InvalidArgument, where + ": rotation is not orthonormal (max |R^T R - I| = " +
                                         format_double(ortho) + ")");
  }
  if (!(std::abs(s.rotation.determinant() - 1.0) < kRotationTol)) {
    fail(ErrorCode::InvalidArgument, where + ": rotation determinant is not +1");
  }
  if (!(s.scales[0] > 0.0) || !(s.scales[1] > 0.0)) {
    fail(ErrorCode::InvalidArgument, where + ": scales must be positive");
  }
  if (!(s.opacity >= 0.0 && s.opacity <= 1.0)) {
    fail(ErrorCode::InvalidArgument, where + ": opacity outside [0,1]");
  }
  if (s.color && !(s.color->minCoeff() >= 0.0 && s.color->maxCoeff() <= 1.0)) {
    fail(ErrorCode::InvalidArgument, where + ": color outside [0,1]^3");
  }
}

Mat3 frame_from_normal(const Vec3& normal, double angle) {
  const Vec3 n = normal.normalized();
  Eigen::Index least = 0;
  n.cwiseAbs().minCoeff(&least);
  const Vec3 axis = Vec3::Unit(least);
  Vec3 t1 = (axis - axis.dot(n) * n).normalized();
  Vec3 t2 = n.cross(t1);
  if (angle != 0.0) {
    const Vec3 r1 = std::cos(angle) * t1 + std::sin(angle) * t2;
    t1 = r1;
    t2 = n.cross(t1);
  }
  Mat3 r;
  r.col(0) = t1;
  r.col(1) = t2;
  r.col(2) = n;
  return r;
}

SurfelCloud load_cloud(const std::string& path, bool allow_empty) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open surfel cloud '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  const bool binary = in.gcount() == 8 && std::memcmp(magic, kBinaryMagic, 8) == 0;
  in.clear();
  SurfelCloud cloud;
  if (binary) {
    cloud = load_binary(in, path);
  } else {
    in.seekg(0);
    cloud = load_text(in, path);
  }
  if (cloud.empty() && !allow_empty) fail(ErrorCode::InvalidArgument, path + ": surfel cloud is empty");
  return cloud;
}

void save_cloud(const SurfelCloud& cloud, const std::string& path, CloudFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  if (format == CloudFormat::Binary) {
    out.write(kBinaryMagic, 8);
    io::write_u64_le(out, cloud.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : cloud.surfels) {
      for (int i = 0; i < 3; ++i) io::write_f64_le(out, s.center[i]);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) io::write_f64_le(out, s.rotation(i, j));
      io::write_f64_le(out, s.scales[0]);
      io::write_f64_le(out, s.scales[1]);
      io::write_f64_le(out, s.opacity);
      for (int i = 0; i < 3; ++i) io::write_f64_le(out, s.color ? (*s.color)[i] : nan);
    }
  } else {
    out << "# cx cy cz r00 r01 r02 r10 r11 r12 r20 r21 r22 s0 s1 [alpha] [cr cg cb]\n";
    out << "surfelcloud v1 " << cloud.size() << '\n';
    out << std::setprecision(17);
    for (const auto& s : cloud.surfels) {
      out << s.center.x() << ' ' << s.center.y() << ' ' << s.center.z();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out << ' ' << s.rotation(i, j);
      out << ' ' << s.scales[0] << ' ' << s.scales[1] << ' ' << s.opacity;
      if (s.color) out << ' ' << s.color->x() << ' ' << s.color->y() << ' ' << s.color->z();
      out << '\n';
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

SurfelCloud normalize_cloud(const SurfelCloud& cloud) {
  SurfelCloud out = cloud;
  if (cloud.empty()) return out;
  Vec3 lo = cloud.surfels.front().center;
  Vec3 hi = lo;
  for (const auto& s : cloud.surfels) {
    lo = lo.cwiseMin(s.center);
    hi = hi.cwiseMax(s.center);
  }
  if (lo.minCoeff() >= -1.0 && hi.maxCoeff() <= 1.0) return out;

  const Vec3 mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff();
  const double scale = half > 0.0 ? 0.95 / half : 1.0;
  SceneTransform t;
  t.scale = scale;
  t.translation = -scale * mid;
  for (auto& s : out.surfels) {
    s.center = t.apply(s.center);
    s.scales *= scale;
  }
  // Compose with whatever transform the input already carried.
  out.transform.scale = t.scale * cloud.transform.scale;
  out.transform.translation = t.scale * cloud.transform.translation + t.translation;
  return out;
}

std::vector<double> knn_distance(std::span<const Vec3> points, std::size_t k) {
  if (k == 0 || k >= points.size()) {
    fail(ErrorCode::InvalidArgument, "knn_distance: k = " + std::to_string(k) + " must be in [1, " +
                                         std::to_string(points.size()) + ")");
  }
  const KdTree tree(points);
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nn = tree.knn(points[i], k, i);
    out[i] = std::sqrt(nn.back().dist2);
  }
  return out;
}

std::vector<double> knn_distance(const SurfelCloud& cloud, std::size_t k) {
  const PointSet centers = cloud.centers();
  return knn_distance(centers, k);
}

PointSet load_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open point file '" + path + "'");
  PointSet points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x())) continue;
    std::string extra;
    if (!(ls >> p.y() >> p.z()) || (ls >> extra)) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) + ": expected 'x y z'");
    }
    points.push_back(p);
  }
  return points;
}

void save_points(const PointSet& points, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace udf
