#pragma once

#include <limits>
#include <vector>

#include "nimap/geometry.hpp"

namespace nimap {

/// Exact 3-D nearest-neighbor search over a fixed point set.
/// Equidistant candidates resolve toward the smaller point index, so
/// queries are fully deterministic.
class KdTree3 {
 public:
  struct Hit {
    std::size_t index = 0;
    double distSq = 0.0;
  };

  KdTree3() = default;
  explicit KdTree3(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Up to k nearest points with distance strictly below maxDist,
  /// sorted by (distance, index).
  std::vector<Hit> knn(const Vec3& query, int k,
                       double maxDist = std::numeric_limits<double>::infinity()) const;

  /// Single nearest point; throws EmptyInputError on an empty tree.
  Hit nearest(const Vec3& query) const;

 private:
  struct Node {
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t pointIndex = 0;
    std::uint8_t axis = 0;
  };

  std::int32_t build(std::vector<std::uint32_t>& order, std::int32_t lo, std::int32_t hi,
                     int depth);

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace nimap
