#pragma once

#include <span>
#include <vector>

#include "nimap/geometry.hpp"
#include "nimap/vnn.hpp"

namespace nimap {

/// One point-set branch: VNLinear(1,H) -> VNLeakyReLU -> VNLinear(H,H)
/// -> VNLeakyReLU -> VNLinear(H,l). Produces an l x 3 feature per point.
struct VNBranch {
  VNLinearWeights lin1;
  VNReluWeights relu1;
  VNLinearWeights lin2;
  VNReluWeights relu2;
  VNLinearWeights lin3;

  Eigen::Index latentRows() const { return lin3.outChannels(); }
};

/// Two branches (positions relative to the voxel center, raw normals);
/// their pooled outputs are concatenated into a 2l x 3 voxel feature.
struct EncoderParams {
  VNBranch point;
  VNBranch normal;

  Eigen::Index latentRows() const { return point.latentRows(); }
  Eigen::Index featureRows() const { return 2 * latentRows(); }
};

/// MLP from (flattened 2l x 3 feature, voxel-local query) to a signed
/// distance mean and a pre-activation for its standard deviation.
/// Inputs and outputs are normalized by the voxel size internally, so the
/// layer widths are geometry-free; softplus keeps sigma positive.
struct DecoderParams {
  std::vector<Eigen::MatrixXd> weights;  // layer k: out x in
  std::vector<Eigen::VectorXd> biases;
  double leakSlope = 0.01;

  Eigen::Index inputWidth() const { return weights.empty() ? 0 : weights.front().cols(); }
};

struct Codec {
  EncoderParams encoder;
  DecoderParams decoder;
  double voxelSize = 0.1;  // meters the decoder normalization is tied to
};

// sigma is clamped to this floor (meters) everywhere it is produced.
inline constexpr double kSigmaFloorMeters = 1e-4;
// softplus^-1(2): predictions start uncertain at ~2 voxel lengths.
inline constexpr double kSigmaBiasInit = 1.8545865421312711;

/// Encoder with the widths used throughout: hidden 32, l = 9 per branch.
EncoderParams makeEncoder(std::uint64_t seed, Eigen::Index hidden = 32, Eigen::Index latent = 9);
/// Decoder MLP 57 -> 128 -> 128 -> 128 -> 2.
DecoderParams makeDecoder(std::uint64_t seed, Eigen::Index latent = 9,
                          const std::vector<Eigen::Index>& hidden = {128, 128, 128});
Codec makeCodec(std::uint64_t seed, double voxelSize = 0.1);

/// Positions relative to `center`, packed as a 1 x 3N batch row.
FeatureBatch packPointInputs(std::span<const PointSample> samples, const Vec3& center);
/// Raw normals packed as a 1 x 3N batch row.
FeatureBatch packNormalInputs(std::span<const PointSample> samples);

/// Runs one branch over a packed batch (C_in x 3N). `trace`, when given,
/// captures every intermediate needed for backpropagation.
struct BranchTrace {
  FeatureBatch x0, a1, q1, k1, r1, a2, q2, k2, r2, a3;
};
FeatureBatch branchForward(const VNBranch& branch, const FeatureBatch& x0,
                           BranchTrace* trace = nullptr);

/// phi_p: a single sample -> 2l x 3 feature (point rows first, then normal).
Feature encodePoint(const EncoderParams& enc, const PointSample& sample, const Vec3& center);

/// phi_e: mean pool of phi_p over the samples of one voxel.
Feature encodeVoxel(const EncoderParams& enc, std::span<const PointSample> samples,
                    const Vec3& center);

struct SdfPrediction {
  double mean;    // meters, signed
  double stddev;  // meters, > 0
};

/// phi_d at a voxel-local query point (meters relative to the voxel center).
SdfPrediction decodeSdf(const DecoderParams& dec, const Feature& feature, const Vec3& queryLocal,
                        double voxelSize);
SdfPrediction decodeSdf(const Codec& codec, const Feature& feature, const Vec3& queryLocal);

/// Assembles the decoder input vector [vec(F), q] / voxelSize.
Eigen::VectorXd decoderInput(const Feature& feature, const Vec3& queryLocal, double voxelSize);

/// Raw normalized decoder pass; out[0] is mean / voxelSize, out[1] the
/// sigma pre-activation. `pre`/`post`, when given, capture layer activations.
Eigen::Vector2d decoderForward(const DecoderParams& dec, const Eigen::VectorXd& x,
                               std::vector<Eigen::VectorXd>* pre = nullptr,
                               std::vector<Eigen::VectorXd>* post = nullptr);

double softplus(double x);

}  // namespace nimap
