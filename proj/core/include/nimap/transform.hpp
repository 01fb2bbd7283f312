#pragma once

#include <span>
#include <vector>

#include "nimap/codec.hpp"
#include "nimap/map.hpp"

namespace nimap {

inline constexpr double kDefaultJacobianStep = 0.01;  // meters, 10% of the voxel size
inline constexpr int kDefaultInterpolationK = 8;

/// Finite-difference feature Jacobian of a voxel: column p is
/// (phi_e(P + dt e_p) - phi_e(P)) / dt over the same sample set.
/// Normal-branch rows are exactly zero (normals do not move under
/// translation).
JacobianBlock computeJacobian(const EncoderParams& enc, std::span<const PointSample> samples,
                              const Vec3& center, double deltaT = kDefaultJacobianStep);

/// Same finite difference around an arbitrary encode function
/// (samples, center) -> Feature. Used to check analytic cases.
template <typename EncodeFn>
JacobianBlock computeJacobianWith(EncodeFn&& encode, std::span<const PointSample> samples,
                                  const Vec3& center, double deltaT = kDefaultJacobianStep) {
  if (samples.empty()) {
    throw EmptyInputError("computeJacobianWith: no samples");
  }
  if (!(deltaT > 0.0)) {
    throw DimensionError("computeJacobianWith: deltaT must be positive");
  }
  const std::vector<PointSample> base(samples.begin(), samples.end());
  const Feature f0 = encode(std::span<const PointSample>(base), center);
  JacobianBlock jac;
  jac.deltaT = deltaT;
  for (int p = 0; p < 3; ++p) {
    std::vector<PointSample> shifted = base;
    for (PointSample& s : shifted) {
      s.position[p] += deltaT;
    }
    const Feature fp = encode(std::span<const PointSample>(shifted), center);
    jac.cols[p] = (fp - f0) / deltaT;
  }
  return jac;
}

/// Re-expresses a Jacobian under a rotation of the map: first each column
/// rotates like the feature it differentiates (J_p <- J_p R^T), then the
/// translation argument is rewritten to accept global displacements
/// (J <- J R^T over the column slot).
JacobianBlock transformJacobian(const JacobianBlock& jac, const Mat3& rotation);

/// A local voxel after the SE(3) update: transformed center, rotated
/// feature, rewritten Jacobian, untouched weight.
struct TransformedVoxel {
  Vec3 center = Vec3::Zero();
  Feature feature;
  JacobianBlock jacobian;
  double weight = 0.0;
};

/// Applies c <- T c and F <- (R F^T)^T to every voxel of the local map.
/// Output follows the sorted voxel-index order of the input map.
std::vector<TransformedVoxel> transformLocalMap(const FrameLocalMap& local, const SE3Pose& pose);

/// Softmax interpolation of transformed voxels onto the target lattice.
/// A lattice cell receives a feature iff some source center lies strictly
/// within one voxel length of its center; its K nearest such sources
/// contribute s_m = exp(-|d|^2)/sum(exp(-|d|^2)) over the center distance
/// d, as F_n = sum s_m (F_m + J_m (c_m - c_n)) and w_n = sum s_m w_m.
ImplicitMap interpolateToGrid(std::span<const TransformedVoxel> sources, const GridSpec& targetGrid,
                              int k = kDefaultInterpolationK);

/// transformLocalMap + interpolateToGrid against the frame's encoded map.
ImplicitMap transformAndInterpolate(const FrameLocalMap& frame, const SE3Pose& pose,
                                    const GridSpec& targetGrid, int k = kDefaultInterpolationK);

struct LocalMapParams {
  double deltaT = kDefaultJacobianStep;
  int minPoints = 8;
};

/// Encodes a frame into its local map: per occupied voxel the gathered
/// samples are encoded, the own-cube count becomes the weight, and the
/// translation Jacobian is cached for later remapping.
FrameLocalMap buildLocalMap(const Codec& codec, std::span<const PointSample> frame,
                            const GridSpec& grid, const LocalMapParams& params = {},
                            std::int64_t frameId = 0);

/// Re-poses a frame inside the global map: removes the cached interpolated
/// contribution, transforms + interpolates the retained local map under
/// newPose, fuses the result back and refreshes cache and recorded pose.
void remapFrame(ImplicitMap& global, FrameLocalMap& frame, ImplicitMap& fusedCache,
                const SE3Pose& newPose, int k = kDefaultInterpolationK);

/// Encode-only map of a frame (no Jacobians); the direct-encoding branch
/// of two-path comparisons.
ImplicitMap encodeFrameToMap(const Codec& codec, std::span<const PointSample> frame,
                             const GridSpec& grid, int minPoints = 8);

}  // namespace nimap
