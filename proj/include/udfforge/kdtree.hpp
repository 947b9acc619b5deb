#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "udfforge/types.hpp"

namespace udf {

inline double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

/// Exact k-nearest-neighbour index over a fixed point set. Results are
/// ordered by (squared distance, index), so ties resolve to the lower index
/// and answers agree bit-for-bit with a brute-force scan.
class KdTree {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  struct Neighbor {
    double dist2;
    std::size_t index;

    bool operator<(const Neighbor& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
    bool operator==(const Neighbor&) const = default;
  };

  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  const PointSet& points() const { return points_; }

  /// The k nearest points to q, nearest first. `exclude` removes one index
  /// from consideration (used to skip the query point itself).
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k, std::size_t exclude = npos) const;
  Neighbor nearest(const Vec3& q, std::size_t exclude = npos) const;

 private:
  struct Node {
    std::size_t begin;
    std::size_t end;
    int axis;  // -1 for leaves
    double split;
    std::size_t left;
    std::size_t right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& q, std::size_t k, std::size_t exclude,
              std::vector<Neighbor>& heap) const;

  PointSet points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace udf
