#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "nimap/errors.hpp"

namespace nimap {

/// A stack of C "vector neurons": each channel is a 3-vector (one row).
/// Rotating the underlying geometry by R maps a feature V to V * R^T,
/// and every layer in this module commutes with that action.
using Feature = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Several vector-neuron features packed side by side as a C x 3N block,
/// sample i occupying columns [3i, 3i+3). Lets the layers run as plain
/// matrix products over a whole point set.
using FeatureBatch = Eigen::MatrixXd;

// q_c / k_c pairs drop the projection when the direction vector collapses;
// below this squared-norm cutoff the non-negative branch is taken instead.
inline constexpr double kDirectionNormEps = 1e-12;

struct VNLinearWeights {
  Eigen::MatrixXd weight;  // C' x C

  Eigen::Index inChannels() const { return weight.cols(); }
  Eigen::Index outChannels() const { return weight.rows(); }
};

/// Per-channel feature map W_c and direction map U_c, stacked as rows.
struct VNReluWeights {
  Eigen::MatrixXd featMap;  // C x C, row c is W_c
  Eigen::MatrixXd dirMap;   // C x C, row c is U_c

  Eigen::Index channels() const { return featMap.rows(); }
};

Feature vnLinear(const VNLinearWeights& w, const Feature& v);
Feature vnLeakyRelu(const VNReluWeights& w, const Feature& v);
Feature vnMeanPool(const std::vector<Feature>& features);

FeatureBatch vnLinearBatch(const VNLinearWeights& w, const FeatureBatch& v);
FeatureBatch vnLeakyReluBatch(const VNReluWeights& w, const FeatureBatch& v);
/// Averages the N sample blocks of a C x 3N batch into one C x 3 feature.
Feature vnMeanPoolBatch(const FeatureBatch& batch);

/// Deterministic seeded RNG used for all parameter initialization.
/// Draws are uniform and reproducible bit-for-bit for a given seed.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  /// Uniform double in [-bound, bound).
  double uniform(double bound);
  std::uint64_t nextU64();

 private:
  std::uint64_t state_;
};

/// Fills a matrix with uniform entries in +-1/sqrt(fanIn).
void initUniform(Eigen::MatrixXd& m, Eigen::Index fanIn, InitRng& rng);

VNLinearWeights makeVNLinear(Eigen::Index out, Eigen::Index in, InitRng& rng);
VNReluWeights makeVNRelu(Eigen::Index channels, InitRng& rng);

}  // namespace nimap
