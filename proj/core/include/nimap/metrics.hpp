#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nimap/mesh.hpp"

namespace nimap {

inline constexpr int kDefaultMetricSamples = 100000;

/// Uniform area-weighted surface samples; deterministic in the seed.
std::vector<Vec3> sampleMeshPoints(const TriangleMesh& mesh, int count, std::uint64_t seed);

/// Mean nearest-neighbor distance from each recon point into reference.
double accuracy(std::span<const Vec3> recon, std::span<const Vec3> reference);

/// Mean nearest-neighbor distance from each reference point into recon.
double completeness(std::span<const Vec3> reference, std::span<const Vec3> recon);

struct SurfaceMetrics {
  double accuracy = 0.0;      // meters
  double completeness = 0.0;  // meters
  double chamfer = 0.0;       // symmetric mean of the two
  std::size_t reconPoints = 0;
  std::size_t referencePoints = 0;
};

SurfaceMetrics evalSurfaceMetrics(std::span<const Vec3> recon, std::span<const Vec3> reference);

}  // namespace nimap
