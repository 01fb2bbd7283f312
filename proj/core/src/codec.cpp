#include "nimap/codec.hpp"

#include <cmath>

namespace nimap {

FeatureBatch packPointInputs(std::span<const PointSample> samples, const Vec3& center) {
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  FeatureBatch points(1, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    points.block<1, 3>(0, 3 * i) = (samples[i].position - center).transpose();
  }
  return points;
}

FeatureBatch packNormalInputs(std::span<const PointSample> samples) {
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  FeatureBatch normals(1, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    normals.block<1, 3>(0, 3 * i) = samples[i].normal.transpose();
  }
  return normals;
}

namespace {

FeatureBatch reluWithTrace(const VNReluWeights& w, const FeatureBatch& a, FeatureBatch* qRaw,
                           FeatureBatch* kOut) {
  FeatureBatch q = w.featMap * a;
  FeatureBatch k = w.dirMap * a;
  if (qRaw != nullptr) {
    *qRaw = q;
  }
  FeatureBatch out = q;
  const Eigen::Index samples = a.cols() / 3;
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    for (Eigen::Index s = 0; s < samples; ++s) {
      const Eigen::RowVector3d qc = q.block<1, 3>(c, 3 * s);
      const Eigen::RowVector3d kc = k.block<1, 3>(c, 3 * s);
      const double dot = qc.dot(kc);
      const double kSq = kc.squaredNorm();
      if (dot < 0.0 && kSq >= kDirectionNormEps * kDirectionNormEps) {
        out.block<1, 3>(c, 3 * s) = qc - (dot / kSq) * kc;
      }
    }
  }
  if (kOut != nullptr) {
    *kOut = std::move(k);
  }
  return out;
}

}  // namespace

EncoderParams makeEncoder(std::uint64_t seed, Eigen::Index hidden, Eigen::Index latent) {
  InitRng rng(seed);
  EncoderParams enc;
  for (VNBranch* branch : {&enc.point, &enc.normal}) {
    branch->lin1 = makeVNLinear(hidden, 1, rng);
    branch->relu1 = makeVNRelu(hidden, rng);
    branch->lin2 = makeVNLinear(hidden, hidden, rng);
    branch->relu2 = makeVNRelu(hidden, rng);
    branch->lin3 = makeVNLinear(latent, hidden, rng);
  }
  return enc;
}

DecoderParams makeDecoder(std::uint64_t seed, Eigen::Index latent,
                          const std::vector<Eigen::Index>& hidden) {
  InitRng rng(seed ^ 0x5851f42d4c957f2dULL);
  DecoderParams dec;
  Eigen::Index in = 2 * latent * 3 + 3;
  for (std::size_t k = 0; k <= hidden.size(); ++k) {
    const Eigen::Index out = (k < hidden.size()) ? hidden[k] : 2;
    Eigen::MatrixXd w(out, in);
    initUniform(w, in, rng);
    dec.weights.push_back(std::move(w));
    dec.biases.push_back(Eigen::VectorXd::Zero(out));
    in = out;
  }
  dec.biases.back()(1) = kSigmaBiasInit;
  return dec;
}

Codec makeCodec(std::uint64_t seed, double voxelSize) {
  Codec codec;
  codec.encoder = makeEncoder(seed);
  codec.decoder = makeDecoder(seed);
  codec.voxelSize = voxelSize;
  return codec;
}

FeatureBatch branchForward(const VNBranch& branch, const FeatureBatch& x0, BranchTrace* trace) {
  FeatureBatch a1 = vnLinearBatch(branch.lin1, x0);
  FeatureBatch r1 = reluWithTrace(branch.relu1, a1, trace ? &trace->q1 : nullptr,
                                  trace ? &trace->k1 : nullptr);
  FeatureBatch a2 = vnLinearBatch(branch.lin2, r1);
  FeatureBatch r2 = reluWithTrace(branch.relu2, a2, trace ? &trace->q2 : nullptr,
                                  trace ? &trace->k2 : nullptr);
  FeatureBatch a3 = vnLinearBatch(branch.lin3, r2);
  if (trace != nullptr) {
    trace->x0 = x0;
    trace->a1 = std::move(a1);
    trace->r1 = std::move(r1);
    trace->a2 = std::move(a2);
    trace->r2 = std::move(r2);
    trace->a3 = a3;
  }
  return a3;
}

Feature encodePoint(const EncoderParams& enc, const PointSample& sample, const Vec3& center) {
  std::span<const PointSample> one(&sample, 1);
  return encodeVoxel(enc, one, center);
}

Feature encodeVoxel(const EncoderParams& enc, std::span<const PointSample> samples,
                    const Vec3& center) {
  if (samples.empty()) {
    throw EmptyInputError("encodeVoxel: no samples");
  }
  const FeatureBatch points = packPointInputs(samples, center);
  const FeatureBatch normals = packNormalInputs(samples);
  const Feature pointFeature = vnMeanPoolBatch(branchForward(enc.point, points));
  const Feature normalFeature = vnMeanPoolBatch(branchForward(enc.normal, normals));
  Feature out(pointFeature.rows() + normalFeature.rows(), 3);
  out.topRows(pointFeature.rows()) = pointFeature;
  out.bottomRows(normalFeature.rows()) = normalFeature;
  return out;
}

double softplus(double x) {
  if (x > 30.0) {
    return x;
  }
  if (x < -30.0) {
    return std::exp(x);
  }
  return std::log1p(std::exp(x));
}

Eigen::VectorXd decoderInput(const Feature& feature, const Vec3& queryLocal, double voxelSize) {
  const Eigen::Index rows = feature.rows();
  Eigen::VectorXd x(3 * rows + 3);
  for (Eigen::Index c = 0; c < rows; ++c) {
    x.segment<3>(3 * c) = feature.row(c).transpose();
  }
  x.tail<3>() = queryLocal;
  return x / voxelSize;
}

Eigen::Vector2d decoderForward(const DecoderParams& dec, const Eigen::VectorXd& x,
                               std::vector<Eigen::VectorXd>* pre,
                               std::vector<Eigen::VectorXd>* post) {
  if (dec.weights.empty() || dec.weights.front().cols() != x.size()) {
    throw DimensionError("decoderForward: input width mismatch");
  }
  Eigen::VectorXd h = x;
  const std::size_t layers = dec.weights.size();
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::VectorXd z = dec.weights[k] * h + dec.biases[k];
    if (pre != nullptr) {
      pre->push_back(z);
    }
    if (k + 1 < layers) {
      h = z.unaryExpr([slope = dec.leakSlope](double v) { return v >= 0.0 ? v : slope * v; });
      if (post != nullptr) {
        post->push_back(h);
      }
    } else {
      h = std::move(z);
    }
  }
  return Eigen::Vector2d(h(0), h(1));
}

SdfPrediction decodeSdf(const DecoderParams& dec, const Feature& feature, const Vec3& queryLocal,
                        double voxelSize) {
  const Eigen::Vector2d out = decoderForward(dec, decoderInput(feature, queryLocal, voxelSize));
  SdfPrediction p;
  p.mean = out(0) * voxelSize;
  p.stddev = std::max(softplus(out(1)) * voxelSize, kSigmaFloorMeters);
  return p;
}

SdfPrediction decodeSdf(const Codec& codec, const Feature& feature, const Vec3& queryLocal) {
  return decodeSdf(codec.decoder, feature, queryLocal, codec.voxelSize);
}

}  // namespace nimap
