#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>

#include "nimap/geometry.hpp"

namespace nimap {

struct VoxelIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const {
    const std::size_t p1 = 73856093;
    const std::size_t p2 = 19349663;
    const std::size_t p3 = 83492791;
    return (static_cast<std::size_t>(v.x) * p1) ^ (static_cast<std::size_t>(v.y) * p2) ^
           (static_cast<std::size_t>(v.z) * p3);
  }
};

/// Uniform lattice: voxel (i,j,k) covers the half-open cube
/// [origin + voxelSize*(i,j,k), origin + voxelSize*(i+1,j+1,k+1)).
struct GridSpec {
  double voxelSize = 0.1;  // meters
  Vec3 origin = Vec3::Zero();

  VoxelIndex indexOf(const Vec3& p) const {
    return VoxelIndex{
        static_cast<std::int32_t>(std::floor((p.x() - origin.x()) / voxelSize)),
        static_cast<std::int32_t>(std::floor((p.y() - origin.y()) / voxelSize)),
        static_cast<std::int32_t>(std::floor((p.z() - origin.z()) / voxelSize)),
    };
  }

  Vec3 centerOf(const VoxelIndex& idx) const {
    return origin + voxelSize * Vec3(idx.x + 0.5, idx.y + 0.5, idx.z + 0.5);
  }

  /// Exact match; fuse/remove demand bit-identical lattices.
  bool sameLattice(const GridSpec& other) const {
    return voxelSize == other.voxelSize && origin.x() == other.origin.x() &&
           origin.y() == other.origin.y() && origin.z() == other.origin.z();
  }
};

}  // namespace nimap
