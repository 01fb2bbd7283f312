#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

#include "nimap/errors.hpp"

namespace nimap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// A surface observation: position in meters plus a unit normal.
struct PointSample {
  Vec3 position{Vec3::Zero()};
  Vec3 normal{Vec3::UnitZ()};
};

using PointCloud = std::vector<PointSample>;

/// Rigid transform, rotation then translation: p -> R p + t.
struct SE3Pose {
  Mat3 rotation{Mat3::Identity()};
  Vec3 translation{Vec3::Zero()};

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  SE3Pose inverse() const {
    SE3Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// this * other: apply `other` first, then this.
  SE3Pose compose(const SE3Pose& other) const {
    SE3Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  bool isIdentity() const {
    return rotation.isIdentity(0.0) && translation.isZero(0.0);
  }
};

inline constexpr double kRotationTol = 1e-9;

/// Throws PoseError unless R^T R = I and det R = +1 within kRotationTol.
void validateRotation(const Mat3& rotation);
inline void validatePose(const SE3Pose& pose) { validateRotation(pose.rotation); }

SE3Pose poseFromQuaternion(const Eigen::Quaterniond& q, const Vec3& translation);

/// Uniform random rotation (quaternion from four gaussian draws).
Mat3 randomRotation(std::uint64_t seed);

PointCloud transformCloud(const PointCloud& cloud, const SE3Pose& pose);

}  // namespace nimap
