#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "udfforge/types.hpp"

namespace testing {

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("udfforge_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double brute_nearest2(const udf::Vec3& p, const udf::PointSet& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : set) best = std::min(best, (p - s).squaredNorm());
  return best;
}

// Two-sided Chamfer by exhaustive search.
inline double brute_chamfer(const udf::PointSet& a, const udf::PointSet& b, bool squared) {
  auto term = [&](const udf::PointSet& from, const udf::PointSet& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      const double d2 = brute_nearest2(p, to);
      sum += squared ? d2 : std::sqrt(d2);
    }
    return sum / static_cast<double>(from.size());
  };
  return term(a, b) + term(b, a);
}

}  // namespace testing
