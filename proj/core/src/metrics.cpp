#include "nimap/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nimap/kdtree.hpp"

namespace nimap {

std::vector<Vec3> sampleMeshPoints(const TriangleMesh& mesh, int count, std::uint64_t seed) {
  if (mesh.empty()) {
    throw EmptyInputError("sampleMeshPoints: empty mesh");
  }
  if (count <= 0) {
    throw EmptyInputError("sampleMeshPoints: count must be positive");
  }
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) {
    throw EmptyInputError("sampleMeshPoints: mesh has zero area");
  }

  InitRng rng(seed);
  const auto unitInterval = [&rng]() {
    return static_cast<double>(rng.nextU64() >> 11) * 0x1.0p-53;
  };
  std::vector<Vec3> points;
  points.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double pick = unitInterval() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t ti = std::min<std::size_t>(it - cumulative.begin(),
                                                 mesh.triangles.size() - 1);
    const auto& t = mesh.triangles[ti];
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const double r1 = std::sqrt(unitInterval());
    const double r2 = unitInterval();
    points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return points;
}

namespace {

double meanNearestDistance(std::span<const Vec3> from, std::span<const Vec3> into) {
  if (from.empty() || into.empty()) {
    throw EmptyInputError("surface metric: empty point set");
  }
  const KdTree3 tree(std::vector<Vec3>(into.begin(), into.end()));
  double sum = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : sum)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(from.size()); ++i) {
    sum += std::sqrt(tree.nearest(from[i]).distSq);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double accuracy(std::span<const Vec3> recon, std::span<const Vec3> reference) {
  return meanNearestDistance(recon, reference);
}

double completeness(std::span<const Vec3> reference, std::span<const Vec3> recon) {
  return meanNearestDistance(reference, recon);
}

SurfaceMetrics evalSurfaceMetrics(std::span<const Vec3> recon, std::span<const Vec3> reference) {
  SurfaceMetrics m;
  m.accuracy = accuracy(recon, reference);
  m.completeness = completeness(reference, recon);
  m.chamfer = 0.5 * (m.accuracy + m.completeness);
  m.reconPoints = recon.size();
  m.referencePoints = reference.size();
  return m;
}

}  // namespace nimap
