#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nimap/codec.hpp"
#include "nimap/grid.hpp"
#include "nimap/primitives.hpp"

namespace nimap {

/// log(sigma) + (d - mu)^2 / (2 sigma^2). Unit-agnostic; throws on sigma <= 0.
double gaussianNll(double mu, double sigma, double dTrue);
/// Batch mean of gaussianNll over aligned spans.
double gaussianNll(std::span<const double> mu, std::span<const double> sigma,
                   std::span<const double> dTrue);

/// One voxel's supervision: context samples to encode (world coordinates)
/// and query targets (voxel-local position, true signed distance, meters).
struct TrainingItem {
  Vec3 center = Vec3::Zero();
  std::vector<PointSample> context;
  std::vector<std::pair<Vec3, double>> targets;
};

/// Gradients for every codec tensor, same shapes as the parameters.
struct BranchGrads {
  Eigen::MatrixXd lin1, relu1F, relu1U, lin2, relu2F, relu2U, lin3;
};
struct CodecGrads {
  BranchGrads point, normal;
  std::vector<Eigen::MatrixXd> decoderWeights;
  std::vector<Eigen::VectorXd> decoderBiases;

  static CodecGrads zeroLike(const Codec& codec);
  void setZero();
  void add(const CodecGrads& other);
  void scale(double s);
};

/// Gaussian NLL of the item's targets (distances normalized by the voxel
/// size, so a fresh codec starts near log(sigma_init) + O(1) > 0), plus,
/// when `grads` is given, backpropagated gradients for all parameters.
/// Conditioning uses the full context; callers subsample beforehand.
double lossAndGradients(const Codec& codec, const TrainingItem& item, CodecGrads* grads);

/// Same loss, but the decoder sees the feature a map transform would hand
/// it: encoded about center - shift and linearized back by the Jacobian.
/// Gradients (when requested) flow into the decoder only.
double lossWithLinearizedFeature(const Codec& codec, const TrainingItem& item, const Vec3& shift,
                                 double jacobianStep, CodecGrads* grads);

struct TrainerConfig {
  std::uint64_t seed = 0;
  double voxelSize = 0.1;
  int minPoints = 8;

  int iterations = 3500;
  int batchVoxels = 8;
  int maxContext = 48;
  int maxTargets = 32;
  double learningRate = 1e-3;
  double holdoutFraction = 0.1;
  int evalEvery = 0;  // > 0: record held-out NLL every that many iterations

  // Fraction of batch items that feed the decoder a feature linearized
  // from a shifted center (F(c - t) + J(c - t) t), mimicking what map
  // transformation + interpolation produces at run time. Only the decoder
  // receives gradients for these items. Large fractions make the decoder
  // hedge everywhere (sigma inflates past the mesh gate), so keep small.
  double augmentFraction = 0.0;
  double augmentMaxShift = 0.9;  // in units of the voxel size
  double jacobianStep = 0.01;    // meters, matches the map transform

  // Dataset recipe (analytic primitives).
  int spheres = 3;
  int boxes = 3;
  int planes = 2;
  int unions = 2;
  int samplesPerShape = 12000;
};

struct TrainReport {
  double initialHoldoutNll = 0.0;
  double finalHoldoutNll = 0.0;
  std::vector<double> lossHistory;     // batch NLL per iteration
  std::vector<double> holdoutHistory;  // held-out NLL at evalEvery checkpoints
  int iterations = 0;
  double seconds = 0.0;
  std::size_t trainItems = 0;
  std::size_t holdoutItems = 0;
};

/// Voxelizes a shape's surface samples and pairs each occupied voxel with
/// the analytic queries that fall inside (a slight margin over) its cube.
std::vector<TrainingItem> buildTrainingItems(const Primitive& shape, int samplesPerShape,
                                             const GridSpec& grid, int minPoints,
                                             std::uint64_t seed);

/// The primitive mix drawn from the config counts.
std::vector<Primitive> trainingShapes(const TrainerConfig& config);

/// Adam on the Gaussian NLL with per-iteration random context/target
/// subsets. Deterministic for a fixed config. Throws TrainingError when
/// the loss turns non-finite.
Codec trainCodec(const TrainerConfig& config, TrainReport* report = nullptr);

/// Mean item NLL with full context; the held-out metric.
double evaluateNll(const Codec& codec, std::span<const TrainingItem> items);

}  // namespace nimap
