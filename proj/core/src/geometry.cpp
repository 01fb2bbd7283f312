#include "nimap/geometry.hpp"

#include <cmath>

#include "nimap/vnn.hpp"

namespace nimap {

void validateRotation(const Mat3& rotation) {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kRotationTol) {
    throw PoseError("rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > kRotationTol) {
    throw PoseError("rotation determinant differs from +1 (reflection?)");
  }
}

SE3Pose poseFromQuaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
  SE3Pose pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.translation = translation;
  return pose;
}

Mat3 randomRotation(std::uint64_t seed) {
  InitRng rng(seed);
  const auto unitInterval = [&rng]() {
    return static_cast<double>(rng.nextU64() >> 11) * 0x1.0p-53;  // [0, 1)
  };
  // Box-Muller pairs -> 4 gaussians -> unit quaternion.
  double g[4];
  for (int i = 0; i < 4; i += 2) {
    const double u1 = 1.0 - unitInterval();  // (0, 1]
    const double u2 = unitInterval();
    const double r = std::sqrt(-2.0 * std::log(u1));
    g[i] = r * std::cos(2.0 * M_PI * u2);
    g[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  Eigen::Quaterniond q(g[0], g[1], g[2], g[3]);
  return q.normalized().toRotationMatrix();
}

PointCloud transformCloud(const PointCloud& cloud, const SE3Pose& pose) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const PointSample& s : cloud) {
    out.push_back({pose.apply(s.position), pose.rotate(s.normal)});
  }
  return out;
}

}  // namespace nimap
