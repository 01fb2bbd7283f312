#include "nimap/primitives.hpp"

#include <algorithm>
#include <cmath>

#include "nimap/vnn.hpp"

namespace nimap {

namespace {

double unitInterval(InitRng& rng) {
  return static_cast<double>(rng.nextU64() >> 11) * 0x1.0p-53;  // [0, 1)
}

double gaussian(InitRng& rng) {
  const double u1 = 1.0 - unitInterval(rng);
  const double u2 = unitInterval(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vec3 unitDirection(InitRng& rng) {
  Vec3 d;
  do {
    d = Vec3(gaussian(rng), gaussian(rng), gaussian(rng));
  } while (d.squaredNorm() < 1e-12);
  return d.normalized();
}

// One surface sample with its exact outward normal.
PointSample sampleSurface(const Primitive& shape, InitRng& rng);

PointSample sampleSphereSurface(const Primitive& s, InitRng& rng) {
  const Vec3 d = unitDirection(rng);
  return {s.center() + s.radius() * d, d};
}

PointSample sampleBoxSurface(const Primitive& s, InitRng& rng) {
  const Vec3& h = s.halfExtents();
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  double pick = unitInterval(rng) * total;
  int axis = 0;
  while (axis < 2 && pick >= areas[axis]) {
    pick -= areas[axis];
    ++axis;
  }
  const double sign = unitInterval(rng) < 0.5 ? -1.0 : 1.0;
  Vec3 p;
  p[axis] = sign * h[axis];
  const int u = (axis + 1) % 3;
  const int v = (axis + 2) % 3;
  p[u] = (2.0 * unitInterval(rng) - 1.0) * h[u];
  p[v] = (2.0 * unitInterval(rng) - 1.0) * h[v];
  Vec3 n = Vec3::Zero();
  n[axis] = sign;
  return {s.center() + p, n};
}

PointSample samplePlaneSurface(const Primitive& s, InitRng& rng) {
  const Vec3 n = s.normal();
  const Vec3 foot = n * s.offset();
  // Orthonormal tangent basis.
  const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 t1 = n.cross(helper).normalized();
  const Vec3 t2 = n.cross(t1);
  const double a = (2.0 * unitInterval(rng) - 1.0) * kPlanePatchHalfExtent;
  const double b = (2.0 * unitInterval(rng) - 1.0) * kPlanePatchHalfExtent;
  return {foot + a * t1 + b * t2, n};
}

PointSample sampleUnionSurface(const Primitive& s, InitRng& rng) {
  // Draw from either component; points strictly inside the other are not
  // part of the union's boundary.
  for (int attempt = 0; attempt < 256; ++attempt) {
    const bool useA = unitInterval(rng) < 0.5;
    const Primitive& chosen = useA ? s.childA() : s.childB();
    const Primitive& other = useA ? s.childB() : s.childA();
    const PointSample candidate = sampleSurface(chosen, rng);
    if (other.sdf(candidate.position) > 1e-9) {
      return candidate;
    }
  }
  throw std::runtime_error("sampleUnionSurface: components swallow each other");
}

PointSample sampleSurface(const Primitive& shape, InitRng& rng) {
  switch (shape.kind()) {
    case Primitive::Kind::Sphere:
      return sampleSphereSurface(shape, rng);
    case Primitive::Kind::Box:
      return sampleBoxSurface(shape, rng);
    case Primitive::Kind::Plane:
      return samplePlaneSurface(shape, rng);
    case Primitive::Kind::Union:
      return sampleUnionSurface(shape, rng);
  }
  throw std::logic_error("sampleSurface: unknown kind");
}

}  // namespace

Primitive Primitive::sphere(const Vec3& center, double radius) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("Primitive::sphere: radius must be positive");
  }
  Primitive p;
  p.kind_ = Kind::Sphere;
  p.center_ = center;
  p.radius_ = radius;
  return p;
}

Primitive Primitive::box(const Vec3& center, const Vec3& halfExtents) {
  if (!(halfExtents.minCoeff() > 0.0)) {
    throw std::invalid_argument("Primitive::box: half extents must be positive");
  }
  Primitive p;
  p.kind_ = Kind::Box;
  p.center_ = center;
  p.halfExtents_ = halfExtents;
  return p;
}

Primitive Primitive::plane(const Vec3& normal, double offset) {
  if (normal.norm() < 1e-12) {
    throw std::invalid_argument("Primitive::plane: zero normal");
  }
  Primitive p;
  p.kind_ = Kind::Plane;
  p.normal_ = normal.normalized();
  p.offset_ = offset;
  return p;
}

Primitive Primitive::unionOf(Primitive a, Primitive b) {
  Primitive p;
  p.kind_ = Kind::Union;
  p.children_.push_back(std::move(a));
  p.children_.push_back(std::move(b));
  return p;
}

double Primitive::sdf(const Vec3& p) const {
  switch (kind_) {
    case Kind::Sphere:
      return (p - center_).norm() - radius_;
    case Kind::Box: {
      const Vec3 q = (p - center_).cwiseAbs() - halfExtents_;
      const Vec3 outside = q.cwiseMax(0.0);
      return outside.norm() + std::min(q.maxCoeff(), 0.0);
    }
    case Kind::Plane:
      return normal_.dot(p) - offset_;
    case Kind::Union:
      return std::min(children_[0].sdf(p), children_[1].sdf(p));
  }
  throw std::logic_error("Primitive::sdf: unknown kind");
}

void Primitive::bounds(Vec3& lo, Vec3& hi) const {
  switch (kind_) {
    case Kind::Sphere:
      lo = center_ - Vec3::Constant(radius_);
      hi = center_ + Vec3::Constant(radius_);
      return;
    case Kind::Box:
      lo = center_ - halfExtents_;
      hi = center_ + halfExtents_;
      return;
    case Kind::Plane: {
      const Vec3 foot = normal_ * offset_;
      lo = foot - Vec3::Constant(kPlanePatchHalfExtent);
      hi = foot + Vec3::Constant(kPlanePatchHalfExtent);
      return;
    }
    case Kind::Union: {
      Vec3 loB, hiB;
      children_[0].bounds(lo, hi);
      children_[1].bounds(loB, hiB);
      lo = lo.cwiseMin(loB);
      hi = hi.cwiseMax(hiB);
      return;
    }
  }
}

PrimitiveSamples samplePrimitiveSdf(const Primitive& shape, int count, std::uint64_t seed) {
  if (count <= 0) {
    throw std::invalid_argument("samplePrimitiveSdf: count must be positive");
  }
  InitRng rng(seed);
  PrimitiveSamples out;
  out.surface.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.surface.push_back(sampleSurface(shape, rng));
  }

  Vec3 lo, hi;
  shape.bounds(lo, hi);
  lo -= Vec3::Constant(0.2);
  hi += Vec3::Constant(0.2);

  out.queries.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec3 q;
    if (unitInterval(rng) < 0.7) {
      // Near-surface query: offset a surface point along its normal.
      const PointSample& base = out.surface[rng.nextU64() % out.surface.size()];
      const double off = (2.0 * unitInterval(rng) - 1.0) * 0.15;
      q = base.position + off * base.normal;
    } else {
      q = Vec3(lo.x() + unitInterval(rng) * (hi.x() - lo.x()),
               lo.y() + unitInterval(rng) * (hi.y() - lo.y()),
               lo.z() + unitInterval(rng) * (hi.z() - lo.z()));
    }
    out.queries.emplace_back(q, shape.sdf(q));
  }
  return out;
}

}  // namespace nimap
