#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "nimap/geometry.hpp"

namespace nimap {

/// Analytic signed-distance primitives used as training geometry:
/// sphere, box, plane, and the union of two primitives.
class Primitive {
 public:
  enum class Kind { Sphere, Box, Plane, Union };

  static Primitive sphere(const Vec3& center, double radius);
  static Primitive box(const Vec3& center, const Vec3& halfExtents);
  /// sdf(p) = normal . p - offset; normal need not be unit, it is normalized.
  static Primitive plane(const Vec3& normal, double offset);
  static Primitive unionOf(Primitive a, Primitive b);

  Kind kind() const { return kind_; }
  double sdf(const Vec3& p) const;

  /// Axis-aligned bounds of the surface (planes use a fixed patch extent).
  void bounds(Vec3& lo, Vec3& hi) const;

  const Vec3& center() const { return center_; }
  double radius() const { return radius_; }
  const Vec3& halfExtents() const { return halfExtents_; }
  const Vec3& normal() const { return normal_; }
  double offset() const { return offset_; }
  const Primitive& childA() const { return children_[0]; }
  const Primitive& childB() const { return children_[1]; }

 private:
  Primitive() = default;

  Kind kind_ = Kind::Sphere;
  Vec3 center_ = Vec3::Zero();
  double radius_ = 0.5;
  Vec3 halfExtents_ = Vec3::Constant(0.5);
  Vec3 normal_ = Vec3::UnitZ();
  double offset_ = 0.0;
  std::vector<Primitive> children_;
};

// Planes are sampled on a square patch of this half extent around the
// point of the plane closest to the origin.
inline constexpr double kPlanePatchHalfExtent = 1.0;

struct PrimitiveSamples {
  PointCloud surface;                             // exact normals
  std::vector<std::pair<Vec3, double>> queries;   // position, true signed distance
};

/// `count` surface samples with analytic normals plus `count` query/SDF
/// pairs concentrated near the surface. Deterministic in `seed`.
PrimitiveSamples samplePrimitiveSdf(const Primitive& shape, int count, std::uint64_t seed);

}  // namespace nimap
