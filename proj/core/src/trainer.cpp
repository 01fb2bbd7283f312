#include "nimap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "nimap/map.hpp"
#include "nimap/transform.hpp"

namespace nimap {

namespace {

double unitInterval(InitRng& rng) {
  return static_cast<double>(rng.nextU64() >> 11) * 0x1.0p-53;
}

double uniformIn(InitRng& rng, double lo, double hi) { return lo + unitInterval(rng) * (hi - lo); }

// ---------------------------------------------------------------------
// Backward passes.

// Gradient of the projection nonlinearity. a is the layer input batch,
// qRaw/k the cached pre-projection maps, gOut the incoming gradient.
void reluBackward(const VNReluWeights& w, const FeatureBatch& a, const FeatureBatch& qRaw,
                  const FeatureBatch& k, const FeatureBatch& gOut, FeatureBatch& gInput,
                  Eigen::MatrixXd& gFeat, Eigen::MatrixXd& gDir) {
  FeatureBatch gQ = gOut;
  FeatureBatch gK = FeatureBatch::Zero(k.rows(), k.cols());
  const Eigen::Index samples = a.cols() / 3;
  for (Eigen::Index c = 0; c < qRaw.rows(); ++c) {
    for (Eigen::Index s = 0; s < samples; ++s) {
      const Eigen::RowVector3d q = qRaw.block<1, 3>(c, 3 * s);
      const Eigen::RowVector3d kc = k.block<1, 3>(c, 3 * s);
      const double dot = q.dot(kc);
      const double kSq = kc.squaredNorm();
      if (dot >= 0.0 || kSq < kDirectionNormEps * kDirectionNormEps) {
        continue;  // identity branch
      }
      const Eigen::RowVector3d g = gOut.block<1, 3>(c, 3 * s);
      const double gk = g.dot(kc);
      // out = q - (q.k / k.k) k
      gQ.block<1, 3>(c, 3 * s) = g - (gk / kSq) * kc;
      gK.block<1, 3>(c, 3 * s) =
          -(gk / kSq) * q - (dot / kSq) * g + (2.0 * dot * gk / (kSq * kSq)) * kc;
    }
  }
  gInput = w.featMap.transpose() * gQ + w.dirMap.transpose() * gK;
  gFeat += gQ * a.transpose();
  gDir += gK * a.transpose();
}

// Backprop through one branch given the gradient of its mean-pooled output.
void branchBackward(const VNBranch& b, const BranchTrace& t, const Feature& gPooled,
                    BranchGrads& g) {
  const Eigen::Index n = t.x0.cols() / 3;
  FeatureBatch gA3(gPooled.rows(), 3 * n);
  const Feature perSample = gPooled / static_cast<double>(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    gA3.middleCols<3>(3 * s) = perSample;
  }

  g.lin3 += gA3 * t.r2.transpose();
  FeatureBatch gR2 = b.lin3.weight.transpose() * gA3;

  FeatureBatch gA2;
  reluBackward(b.relu2, t.a2, t.q2, t.k2, gR2, gA2, g.relu2F, g.relu2U);

  g.lin2 += gA2 * t.r1.transpose();
  FeatureBatch gR1 = b.lin2.weight.transpose() * gA2;

  FeatureBatch gA1;
  reluBackward(b.relu1, t.a1, t.q1, t.k1, gR1, gA1, g.relu1F, g.relu1U);

  g.lin1 += gA1 * t.x0.transpose();
}

Eigen::MatrixXd zeroLikeM(const Eigen::MatrixXd& m) {
  return Eigen::MatrixXd::Zero(m.rows(), m.cols());
}

}  // namespace

CodecGrads CodecGrads::zeroLike(const Codec& codec) {
  CodecGrads g;
  auto zeroBranch = [](const VNBranch& b) {
    BranchGrads bg;
    bg.lin1 = zeroLikeM(b.lin1.weight);
    bg.relu1F = zeroLikeM(b.relu1.featMap);
    bg.relu1U = zeroLikeM(b.relu1.dirMap);
    bg.lin2 = zeroLikeM(b.lin2.weight);
    bg.relu2F = zeroLikeM(b.relu2.featMap);
    bg.relu2U = zeroLikeM(b.relu2.dirMap);
    bg.lin3 = zeroLikeM(b.lin3.weight);
    return bg;
  };
  g.point = zeroBranch(codec.encoder.point);
  g.normal = zeroBranch(codec.encoder.normal);
  for (const auto& w : codec.decoder.weights) {
    g.decoderWeights.push_back(zeroLikeM(w));
  }
  for (const auto& b : codec.decoder.biases) {
    g.decoderBiases.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return g;
}

namespace {

template <typename F>
void visitBranchGrads(BranchGrads& g, F&& f) {
  f(g.lin1);
  f(g.relu1F);
  f(g.relu1U);
  f(g.lin2);
  f(g.relu2F);
  f(g.relu2U);
  f(g.lin3);
}

template <typename F>
void visitGrads(CodecGrads& g, F&& f) {
  visitBranchGrads(g.point, f);
  visitBranchGrads(g.normal, f);
  for (auto& w : g.decoderWeights) {
    f(w);
  }
  for (auto& b : g.decoderBiases) {
    f(b);
  }
}

template <typename F>
void visitGradPairs(CodecGrads& a, const CodecGrads& b, F&& f) {
  auto branch = [&f](BranchGrads& x, const BranchGrads& y) {
    f(x.lin1, y.lin1);
    f(x.relu1F, y.relu1F);
    f(x.relu1U, y.relu1U);
    f(x.lin2, y.lin2);
    f(x.relu2F, y.relu2F);
    f(x.relu2U, y.relu2U);
    f(x.lin3, y.lin3);
  };
  branch(a.point, b.point);
  branch(a.normal, b.normal);
  for (std::size_t i = 0; i < a.decoderWeights.size(); ++i) {
    f(a.decoderWeights[i], b.decoderWeights[i]);
  }
  for (std::size_t i = 0; i < a.decoderBiases.size(); ++i) {
    f(a.decoderBiases[i], b.decoderBiases[i]);
  }
}

// Flattened views over all tensors, in a fixed order shared between a
// Codec and its CodecGrads.
struct TensorView {
  double* data;
  std::ptrdiff_t size;
};

std::vector<TensorView> views(Codec& c) {
  std::vector<TensorView> out;
  auto addBranch = [&out](VNBranch& b) {
    for (Eigen::MatrixXd* m : {&b.lin1.weight, &b.relu1.featMap, &b.relu1.dirMap, &b.lin2.weight,
                               &b.relu2.featMap, &b.relu2.dirMap, &b.lin3.weight}) {
      out.push_back({m->data(), m->size()});
    }
  };
  addBranch(c.encoder.point);
  addBranch(c.encoder.normal);
  for (auto& w : c.decoder.weights) {
    out.push_back({w.data(), w.size()});
  }
  for (auto& b : c.decoder.biases) {
    out.push_back({b.data(), b.size()});
  }
  return out;
}

std::vector<TensorView> views(CodecGrads& g) {
  std::vector<TensorView> out;
  visitGrads(g, [&out](auto& m) { out.push_back({m.data(), m.size()}); });
  return out;
}

class Adam {
 public:
  Adam(std::size_t tensorCount, double lr) : lr_(lr), m_(tensorCount), v_(tensorCount) {}

  void step(std::vector<TensorView>& params, std::vector<TensorView>& grads) {
    ++t_;
    const double corr1 = 1.0 - std::pow(kBeta1, t_);
    const double corr2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
      Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
      if (m_[i].size() == 0) {
        m_[i] = Eigen::ArrayXd::Zero(params[i].size);
        v_[i] = Eigen::ArrayXd::Zero(params[i].size);
      }
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g.square();
      p -= lr_ * (m_[i] / corr1) / ((v_[i] / corr2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  double lr_;
  int t_ = 0;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
};

}  // namespace

void CodecGrads::setZero() {
  visitGrads(*this, [](auto& m) { m.setZero(); });
}

void CodecGrads::add(const CodecGrads& other) {
  visitGradPairs(*this, other, [](auto& a, const auto& b) { a += b; });
}

void CodecGrads::scale(double s) {
  visitGrads(*this, [s](auto& m) { m *= s; });
}

double gaussianNll(double mu, double sigma, double dTrue) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("gaussianNll: sigma must be positive");
  }
  const double err = dTrue - mu;
  return std::log(sigma) + err * err / (2.0 * sigma * sigma);
}

double gaussianNll(std::span<const double> mu, std::span<const double> sigma,
                   std::span<const double> dTrue) {
  if (mu.empty() || mu.size() != sigma.size() || mu.size() != dTrue.size()) {
    throw EmptyInputError("gaussianNll: empty or mismatched batch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    sum += gaussianNll(mu[i], sigma[i], dTrue[i]);
  }
  return sum / static_cast<double>(mu.size());
}

namespace {

// NLL (distances normalized by the voxel size) of decoding `feature` at
// the given targets. Accumulates decoder gradients into `grads` and the
// gradient with respect to the feature into `gFeature` when requested.
double decodeNll(const Codec& codec, const Feature& feature,
                 const std::vector<std::pair<Vec3, double>>& targets, CodecGrads* grads,
                 Feature* gFeature) {
  const double vs = codec.voxelSize;
  const double sigmaFloor = kSigmaFloorMeters / vs;
  const Eigen::Index latent = codec.encoder.latentRows();

  const Eigen::Index T = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index inWidth = 6 * latent + 3;
  Eigen::MatrixXd x(inWidth, T);
  const Eigen::VectorXd featPart = decoderInput(feature, Vec3::Zero(), vs);
  for (Eigen::Index j = 0; j < T; ++j) {
    x.col(j) = featPart;
    x.col(j).tail<3>() = targets[j].first / vs;
  }

  const auto& dec = codec.decoder;
  const std::size_t layers = dec.weights.size();
  std::vector<Eigen::MatrixXd> pre(layers);
  std::vector<Eigen::MatrixXd> post(layers);  // post[k] = input of layer k
  Eigen::MatrixXd h = x;
  for (std::size_t kl = 0; kl < layers; ++kl) {
    post[kl] = h;
    pre[kl] = (dec.weights[kl] * h).colwise() + dec.biases[kl];
    if (kl + 1 < layers) {
      h = pre[kl].unaryExpr(
          [slope = dec.leakSlope](double v) { return v >= 0.0 ? v : slope * v; });
    } else {
      h = pre[kl];
    }
  }

  double loss = 0.0;
  Eigen::MatrixXd gOut = Eigen::MatrixXd::Zero(2, T);
  for (Eigen::Index j = 0; j < T; ++j) {
    const double muN = h(0, j);
    const double s = h(1, j);
    const double sp = softplus(s);
    const bool clamped = sp < sigmaFloor;
    const double sigmaN = clamped ? sigmaFloor : sp;
    const double dN = targets[j].second / vs;
    const double err = dN - muN;
    loss += std::log(sigmaN) + err * err / (2.0 * sigmaN * sigmaN);
    if (grads != nullptr) {
      const double invT = 1.0 / static_cast<double>(T);
      gOut(0, j) = -err / (sigmaN * sigmaN) * invT;
      if (!clamped) {
        const double dSigma = 1.0 / sigmaN - err * err / (sigmaN * sigmaN * sigmaN);
        const double sig = 1.0 / (1.0 + std::exp(-s));  // d softplus / ds
        gOut(1, j) = dSigma * sig * invT;
      }
    }
  }
  loss /= static_cast<double>(T);

  if (grads == nullptr) {
    return loss;
  }

  Eigen::MatrixXd gZ = gOut;
  for (std::size_t kl = layers; kl-- > 0;) {
    grads->decoderWeights[kl] += gZ * post[kl].transpose();
    grads->decoderBiases[kl] += gZ.rowwise().sum();
    if (kl == 0) {
      if (gFeature != nullptr) {
        Eigen::MatrixXd gX = dec.weights[0].transpose() * gZ;
        // Feature rows of the decoder input are shared across targets.
        Eigen::VectorXd gFeatFlat = gX.topRows(6 * latent).rowwise().sum() / vs;
        gFeature->resize(2 * latent, 3);
        for (Eigen::Index c = 0; c < 2 * latent; ++c) {
          gFeature->row(c) = gFeatFlat.segment<3>(3 * c).transpose();
        }
      }
    } else {
      Eigen::MatrixXd gH = dec.weights[kl].transpose() * gZ;
      gZ = gH.array() * pre[kl - 1].unaryExpr([slope = dec.leakSlope](double v) {
                            return v >= 0.0 ? 1.0 : slope;
                          }).array();
    }
  }
  return loss;
}

void validateItem(const TrainingItem& item) {
  if (item.context.empty()) {
    throw EmptyInputError("trainer: item has no context samples");
  }
  if (item.targets.empty()) {
    throw EmptyInputError("trainer: item has no targets");
  }
}

}  // namespace

double lossAndGradients(const Codec& codec, const TrainingItem& item, CodecGrads* grads) {
  validateItem(item);
  const Eigen::Index latent = codec.encoder.latentRows();

  // Encode the context (with traces when gradients are wanted).
  const FeatureBatch pointsIn = packPointInputs(item.context, item.center);
  const FeatureBatch normalsIn = packNormalInputs(item.context);
  BranchTrace pointTrace, normalTrace;
  const Feature pointFeat = vnMeanPoolBatch(
      branchForward(codec.encoder.point, pointsIn, grads ? &pointTrace : nullptr));
  const Feature normalFeat = vnMeanPoolBatch(
      branchForward(codec.encoder.normal, normalsIn, grads ? &normalTrace : nullptr));
  Feature feature(2 * latent, 3);
  feature.topRows(latent) = pointFeat;
  feature.bottomRows(latent) = normalFeat;

  Feature gFeature;
  const double loss =
      decodeNll(codec, feature, item.targets, grads, grads ? &gFeature : nullptr);
  if (grads != nullptr) {
    branchBackward(codec.encoder.point, pointTrace, gFeature.topRows(latent), grads->point);
    branchBackward(codec.encoder.normal, normalTrace, gFeature.bottomRows(latent),
                   grads->normal);
  }
  return loss;
}

double lossWithLinearizedFeature(const Codec& codec, const TrainingItem& item, const Vec3& shift,
                                 double jacobianStep, CodecGrads* grads) {
  validateItem(item);
  const Vec3 sourceCenter = item.center - shift;
  const Feature base = encodeVoxel(codec.encoder, item.context, sourceCenter);
  const JacobianBlock jac =
      computeJacobian(codec.encoder, item.context, sourceCenter, jacobianStep);
  // Same re-centering displacement the interpolation applies: source - target.
  const Feature linearized = base + jac.apply(sourceCenter - item.center);
  return decodeNll(codec, linearized, item.targets, grads, nullptr);
}

std::vector<TrainingItem> buildTrainingItems(const Primitive& shape, int samplesPerShape,
                                             const GridSpec& grid, int minPoints,
                                             std::uint64_t seed) {
  const PrimitiveSamples data = samplePrimitiveSdf(shape, samplesPerShape, seed);
  // Keep gathered-only cells (ownCount 0) too: after a map transform the
  // interpolation produces voxels whose surface lies outside the cube, and
  // the decoder must return sane distances and uncertainties there.
  const Voxelization buckets = voxelize(data.surface, grid, 0);

  // Targets join every voxel whose 2x support cube contains them,
  // expressed voxel-locally.
  const double margin = grid.voxelSize;
  std::unordered_map<VoxelIndex, std::vector<std::pair<Vec3, double>>, VoxelIndexHash> targets;
  for (const auto& [q, sdf] : data.queries) {
    const VoxelIndex base = grid.indexOf(q);
    for (std::int32_t dx = -1; dx <= 1; ++dx) {
      for (std::int32_t dy = -1; dy <= 1; ++dy) {
        for (std::int32_t dz = -1; dz <= 1; ++dz) {
          const VoxelIndex idx{base.x + dx, base.y + dy, base.z + dz};
          if (buckets.find(idx) == buckets.end()) {
            continue;
          }
          const Vec3 local = q - grid.centerOf(idx);
          if (local.cwiseAbs().maxCoeff() <= margin) {
            targets[idx].emplace_back(local, sdf);
          }
        }
      }
    }
  }

  std::vector<VoxelIndex> order;
  order.reserve(buckets.size());
  for (const auto& [idx, bucket] : buckets) {
    order.push_back(idx);
  }
  std::sort(order.begin(), order.end());

  const std::size_t minContext = static_cast<std::size_t>(std::max(minPoints, 8));
  std::vector<TrainingItem> items;
  for (const VoxelIndex& idx : order) {
    auto tit = targets.find(idx);
    if (tit == targets.end() || tit->second.size() < 8) {
      continue;
    }
    const VoxelSamples& bucket = buckets.at(idx);
    if (bucket.gathered.size() < minContext) {
      continue;
    }
    TrainingItem item;
    item.center = grid.centerOf(idx);
    item.context = bucket.gathered;
    item.targets = std::move(tit->second);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<Primitive> trainingShapes(const TrainerConfig& config) {
  InitRng rng(config.seed ^ 0xda3e39cb94b95bdbULL);
  std::vector<Primitive> shapes;
  auto jitter = [&rng](double r) { return Vec3(uniformIn(rng, -r, r), uniformIn(rng, -r, r),
                                               uniformIn(rng, -r, r)); };
  for (int i = 0; i < config.spheres; ++i) {
    shapes.push_back(Primitive::sphere(jitter(0.3), uniformIn(rng, 0.25, 0.7)));
  }
  for (int i = 0; i < config.boxes; ++i) {
    shapes.push_back(Primitive::box(
        jitter(0.3), Vec3(uniformIn(rng, 0.15, 0.5), uniformIn(rng, 0.15, 0.5),
                          uniformIn(rng, 0.15, 0.5))));
  }
  for (int i = 0; i < config.planes; ++i) {
    Vec3 n(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1));
    if (n.norm() < 0.1) {
      n = Vec3::UnitZ();
    }
    shapes.push_back(Primitive::plane(n, uniformIn(rng, -0.2, 0.2)));
  }
  for (int i = 0; i < config.unions; ++i) {
    Primitive a = Primitive::sphere(jitter(0.25), uniformIn(rng, 0.2, 0.45));
    Primitive b = (i % 2 == 0)
                      ? Primitive::box(jitter(0.25), Vec3(uniformIn(rng, 0.15, 0.4),
                                                          uniformIn(rng, 0.15, 0.4),
                                                          uniformIn(rng, 0.15, 0.4)))
                      : Primitive::sphere(jitter(0.25), uniformIn(rng, 0.2, 0.45));
    shapes.push_back(Primitive::unionOf(std::move(a), std::move(b)));
  }
  return shapes;
}

double evaluateNll(const Codec& codec, std::span<const TrainingItem> items) {
  if (items.empty()) {
    throw EmptyInputError("evaluateNll: no items");
  }
  double sum = 0.0;
  for (const TrainingItem& item : items) {
    sum += lossAndGradients(codec, item, nullptr);
  }
  return sum / static_cast<double>(items.size());
}

namespace {

// Deterministic subset of size <= cap, order-preserving.
template <typename T>
std::vector<T> subsample(const std::vector<T>& all, int cap, std::uint64_t seed) {
  if (static_cast<int>(all.size()) <= cap) {
    return all;
  }
  std::vector<std::uint32_t> idx(all.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) {
    idx[i] = i;
  }
  InitRng rng(seed);
  // Partial Fisher-Yates for the first `cap` slots.
  for (int i = 0; i < cap; ++i) {
    const std::size_t j = i + rng.nextU64() % (idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(cap);
  for (std::uint32_t i : idx) {
    out.push_back(all[i]);
  }
  return out;
}

}  // namespace

Codec trainCodec(const TrainerConfig& config, TrainReport* report) {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec grid{config.voxelSize, Vec3::Zero()};

  std::vector<TrainingItem> items;
  const std::vector<Primitive> shapes = trainingShapes(config);
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    auto shapeItems = buildTrainingItems(shapes[s], config.samplesPerShape, grid,
                                         config.minPoints, config.seed + 1000 + s);
    items.insert(items.end(), std::make_move_iterator(shapeItems.begin()),
                 std::make_move_iterator(shapeItems.end()));
  }
  if (items.size() < 16) {
    throw TrainingError("trainCodec: dataset too small (" + std::to_string(items.size()) +
                        " voxels)");
  }

  // Seeded shuffle, then split off the held-out tail.
  {
    InitRng rng(config.seed ^ 0x94d049bb133111ebULL);
    for (std::size_t i = items.size(); i-- > 1;) {
      std::swap(items[i], items[rng.nextU64() % (i + 1)]);
    }
  }
  const std::size_t holdoutCount =
      std::max<std::size_t>(1, static_cast<std::size_t>(items.size() * config.holdoutFraction));
  const std::size_t trainCount = items.size() - holdoutCount;
  std::span<const TrainingItem> trainSet(items.data(), trainCount);
  std::span<const TrainingItem> holdout(items.data() + trainCount, holdoutCount);

  Codec codec = makeCodec(config.seed, config.voxelSize);
  const double initialNll = evaluateNll(codec, holdout);

  std::vector<TensorView> paramViews = views(codec);
  Adam adam(paramViews.size(), config.learningRate);
  CodecGrads grads = CodecGrads::zeroLike(codec);
  std::vector<CodecGrads> itemGrads(config.batchVoxels, CodecGrads::zeroLike(codec));
  std::vector<double> itemLoss(config.batchVoxels, 0.0);

  InitRng batchRng(config.seed ^ 0xbf58476d1ce4e5b9ULL);
  std::vector<double> history;
  history.reserve(config.iterations);
  std::vector<double> holdoutHistory;

  for (int iter = 0; iter < config.iterations; ++iter) {
    struct Draw {
      std::size_t item;
      std::uint64_t ctxSeed;
      std::uint64_t tgtSeed;
      bool augmented;
      Vec3 shift;
    };
    std::vector<Draw> draws(config.batchVoxels);
    for (auto& d : draws) {
      d.item = batchRng.nextU64() % trainCount;
      d.ctxSeed = batchRng.nextU64();
      d.tgtSeed = batchRng.nextU64();
      d.augmented = unitInterval(batchRng) < config.augmentFraction;
      Vec3 dir(uniformIn(batchRng, -1, 1), uniformIn(batchRng, -1, 1),
               uniformIn(batchRng, -1, 1));
      if (dir.norm() < 1e-9) {
        dir = Vec3::UnitX();
      }
      const double mag =
          uniformIn(batchRng, 0.15, config.augmentMaxShift) * config.voxelSize;
      d.shift = mag * dir.normalized();
    }

#pragma omp parallel for schedule(static)
    for (int b = 0; b < config.batchVoxels; ++b) {
      const TrainingItem& full = trainSet[draws[b].item];
      TrainingItem sub;
      sub.center = full.center;
      sub.context = subsample(full.context, config.maxContext, draws[b].ctxSeed);
      if (static_cast<int>(sub.context.size()) < config.minPoints) {
        sub.context = full.context;
      }
      sub.targets = subsample(full.targets, config.maxTargets, draws[b].tgtSeed);
      itemGrads[b].setZero();
      if (draws[b].augmented) {
        itemLoss[b] = lossWithLinearizedFeature(codec, sub, draws[b].shift,
                                                config.jacobianStep, &itemGrads[b]);
      } else {
        itemLoss[b] = lossAndGradients(codec, sub, &itemGrads[b]);
      }
    }

    double batchLoss = 0.0;
    grads.setZero();
    for (int b = 0; b < config.batchVoxels; ++b) {
      batchLoss += itemLoss[b];
      grads.add(itemGrads[b]);
    }
    batchLoss /= config.batchVoxels;
    grads.scale(1.0 / config.batchVoxels);
    if (!std::isfinite(batchLoss)) {
      throw TrainingError("trainCodec: loss diverged at iteration " + std::to_string(iter));
    }
    history.push_back(batchLoss);

    std::vector<TensorView> gradViews = views(grads);
    adam.step(paramViews, gradViews);

    if (config.evalEvery > 0 && (iter + 1) % config.evalEvery == 0) {
      holdoutHistory.push_back(evaluateNll(codec, holdout));
    }
  }

  const double finalNll = evaluateNll(codec, holdout);
  if (report != nullptr) {
    report->initialHoldoutNll = initialNll;
    report->finalHoldoutNll = finalNll;
    report->lossHistory = std::move(history);
    report->holdoutHistory = std::move(holdoutHistory);
    report->iterations = config.iterations;
    report->trainItems = trainCount;
    report->holdoutItems = holdoutCount;
    report->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return codec;
}

}  // namespace nimap
