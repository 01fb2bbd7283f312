#include "nimap/vnn.hpp"

#include <cmath>

namespace nimap {

namespace {

// One channel of the projection nonlinearity. q is kept whenever it points
// into the half space of k (or k is degenerate); otherwise the component of
// q along k is removed.
inline void projectChannel(Eigen::RowVector3d& q, const Eigen::RowVector3d& k) {
  const double dot = q.dot(k);
  if (dot >= 0.0) {
    return;
  }
  const double kSq = k.squaredNorm();
  if (kSq < kDirectionNormEps * kDirectionNormEps) {
    return;
  }
  q -= (dot / kSq) * k;
}

}  // namespace

Feature vnLinear(const VNLinearWeights& w, const Feature& v) {
  if (w.weight.cols() != v.rows()) {
    throw DimensionError("vnLinear: weight has " + std::to_string(w.weight.cols()) +
                         " input channels, feature has " + std::to_string(v.rows()));
  }
  return w.weight * v;
}

Feature vnLeakyRelu(const VNReluWeights& w, const Feature& v) {
  if (w.featMap.cols() != v.rows() || w.dirMap.cols() != v.rows()) {
    throw DimensionError("vnLeakyRelu: weight/feature channel mismatch");
  }
  Feature q = w.featMap * v;
  const Feature k = w.dirMap * v;
  for (Eigen::Index c = 0; c < q.rows(); ++c) {
    Eigen::RowVector3d qc = q.row(c);
    projectChannel(qc, k.row(c));
    q.row(c) = qc;
  }
  return q;
}

Feature vnMeanPool(const std::vector<Feature>& features) {
  if (features.empty()) {
    throw EmptyInputError("vnMeanPool: empty feature list");
  }
  const Eigen::Index channels = features.front().rows();
  Feature sum = Feature::Zero(channels, 3);
  for (const Feature& f : features) {
    if (f.rows() != channels) {
      throw DimensionError("vnMeanPool: non-uniform channel count");
    }
    sum += f;
  }
  return sum / static_cast<double>(features.size());
}

FeatureBatch vnLinearBatch(const VNLinearWeights& w, const FeatureBatch& v) {
  if (w.weight.cols() != v.rows()) {
    throw DimensionError("vnLinearBatch: weight/feature channel mismatch");
  }
  return w.weight * v;
}

FeatureBatch vnLeakyReluBatch(const VNReluWeights& w, const FeatureBatch& v) {
  if (w.featMap.cols() != v.rows() || w.dirMap.cols() != v.rows()) {
    throw DimensionError("vnLeakyReluBatch: weight/feature channel mismatch");
  }
  FeatureBatch q = w.featMap * v;
  const FeatureBatch k = w.dirMap * v;
  const Eigen::Index samples = v.cols() / 3;
  for (Eigen::Index c = 0; c < q.rows(); ++c) {
    for (Eigen::Index s = 0; s < samples; ++s) {
      Eigen::RowVector3d qc = q.block<1, 3>(c, 3 * s);
      projectChannel(qc, k.block<1, 3>(c, 3 * s));
      q.block<1, 3>(c, 3 * s) = qc;
    }
  }
  return q;
}

Feature vnMeanPoolBatch(const FeatureBatch& batch) {
  if (batch.cols() == 0 || batch.cols() % 3 != 0) {
    throw EmptyInputError("vnMeanPoolBatch: batch must hold >=1 sample block");
  }
  const Eigen::Index samples = batch.cols() / 3;
  Feature sum = Feature::Zero(batch.rows(), 3);
  for (Eigen::Index s = 0; s < samples; ++s) {
    sum += batch.middleCols<3>(3 * s);
  }
  return sum / static_cast<double>(samples);
}

double InitRng::uniform(double bound) {
  // 53-bit mantissa draw, identical on every platform.
  const double u = static_cast<double>(nextU64() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

std::uint64_t InitRng::nextU64() {
  // splitmix64
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void initUniform(Eigen::MatrixXd& m, Eigen::Index fanIn, InitRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fanIn));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = rng.uniform(bound);
    }
  }
}

VNLinearWeights makeVNLinear(Eigen::Index out, Eigen::Index in, InitRng& rng) {
  VNLinearWeights w;
  w.weight.resize(out, in);
  initUniform(w.weight, in, rng);
  return w;
}

VNReluWeights makeVNRelu(Eigen::Index channels, InitRng& rng) {
  VNReluWeights w;
  w.featMap.resize(channels, channels);
  w.dirMap.resize(channels, channels);
  initUniform(w.featMap, channels, rng);
  initUniform(w.dirMap, channels, rng);
  return w;
}

}  // namespace nimap
