#pragma once

// Shared synthetic-data helpers for the test suites.

#include <cstdint>
#include <vector>

#include "nimap/geometry.hpp"
#include "nimap/primitives.hpp"
#include "nimap/vnn.hpp"

namespace nimap::testsupport {

inline double unitInterval(InitRng& rng) {
  return static_cast<double>(rng.nextU64() >> 11) * 0x1.0p-53;
}

inline double uniformIn(InitRng& rng, double lo, double hi) {
  return lo + unitInterval(rng) * (hi - lo);
}

inline Feature randomFeature(Eigen::Index rows, InitRng& rng, double scale = 1.0) {
  Feature f(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < 3; ++c) {
      f(r, c) = uniformIn(rng, -scale, scale);
    }
  }
  return f;
}

inline PointCloud sphereCloud(const Vec3& center, double radius, int count,
                              std::uint64_t seed) {
  const PrimitiveSamples s = samplePrimitiveSdf(Primitive::sphere(center, radius), count, seed);
  return s.surface;
}

/// A small closed scene: a box shell with a box bump, roughly 2 x 2 x 1
/// meters, dense enough for voxel size 0.1. Dimensions are deliberately
/// off-lattice so no face coincides with a voxel boundary plane.
inline PointCloud roomCloud(int count, std::uint64_t seed) {
  // Every face sits >= 5 mm away from any multiple of the 0.1 voxel size.
  Primitive shell = Primitive::unionOf(
      Primitive::box(Vec3(0.0137, -0.0221, 0.4533), Vec3(0.9731, 1.0313, 0.4407)),
      Primitive::box(Vec3(0.3551, -0.2473, 0.2531), Vec3(0.2213, 0.2087, 0.2079)));
  const PrimitiveSamples s = samplePrimitiveSdf(shell, count, seed);
  return s.surface;
}

/// Cloud samples of a patch of the plane z = z0.
inline PointCloud planeCloud(double z0, double halfExtent, int count, std::uint64_t seed) {
  InitRng rng(seed);
  PointCloud cloud;
  cloud.reserve(count);
  for (int i = 0; i < count; ++i) {
    cloud.push_back({Vec3(uniformIn(rng, -halfExtent, halfExtent),
                          uniformIn(rng, -halfExtent, halfExtent), z0),
                     Vec3::UnitZ()});
  }
  return cloud;
}

/// Lattice-preserving pose: rotation by a multiple of 90 degrees about a
/// grid axis plus an integer-voxel translation.
inline SE3Pose latticePose(int axis, int quarterTurns, const Eigen::Vector3i& voxelShift,
                           double voxelSize) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(quarterTurns * M_PI / 2.0);
  const double s = std::sin(quarterTurns * M_PI / 2.0);
  // Exact entries: snap cos/sin of right angles to {-1, 0, 1}.
  const auto snap = [](double v) { return std::round(v); };
  const int u = (axis + 1) % 3;
  const int v = (axis + 2) % 3;
  r(u, u) = snap(c);
  r(u, v) = snap(-s);
  r(v, u) = snap(s);
  r(v, v) = snap(c);
  SE3Pose pose;
  pose.rotation = r;
  pose.translation = voxelSize * voxelShift.cast<double>();
  return pose;
}

}  // namespace nimap::testsupport
