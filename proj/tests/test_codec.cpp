#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "nimap/codec.hpp"
#include "nimap/kdtree.hpp"
#include "nimap/trainer.hpp"
#include "nimap/weights_io.hpp"
#include "test_support.hpp"

using namespace nimap;
using namespace nimap::testsupport;

namespace {

PointCloud randomSamples(int n, const Vec3& center, double spread, std::uint64_t seed) {
  InitRng rng(seed);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    Vec3 p(uniformIn(rng, -spread, spread), uniformIn(rng, -spread, spread),
           uniformIn(rng, -spread, spread));
    Vec3 n3(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1));
    if (n3.norm() < 1e-6) {
      n3 = Vec3::UnitZ();
    }
    cloud.push_back({center + p, n3.normalized()});
  }
  return cloud;
}

PointCloud rotateAbout(const PointCloud& cloud, const Mat3& r, const Vec3& center) {
  PointCloud out;
  for (const auto& s : cloud) {
    out.push_back({center + r * (s.position - center), r * s.normal});
  }
  return out;
}

}  // namespace

TEST_CASE("encodePoint produces an 18x3 feature") {
  const EncoderParams enc = makeEncoder(1);
  const Feature f = encodePoint(enc, {Vec3(0.01, 0.02, 0.03), Vec3::UnitX()}, Vec3::Zero());
  CHECK(f.rows() == 18);
  CHECK(f.cols() == 3);
}

TEST_CASE("encodePoint at the voxel center has zero point-branch rows") {
  const EncoderParams enc = makeEncoder(2);
  const Vec3 center(0.35, -0.15, 0.05);
  const Feature f = encodePoint(enc, {center, Vec3::UnitY()}, center);
  CHECK(f.topRows(9).cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.bottomRows(9).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("encodePoint commutes with rotations about the center") {
  const EncoderParams enc = makeEncoder(3);
  InitRng rng(30);
  const Vec3 center(0.05, 0.05, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSample s{center + Vec3(uniformIn(rng, -0.1, 0.1), uniformIn(rng, -0.1, 0.1),
                                      uniformIn(rng, -0.1, 0.1)),
                        Vec3(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1))
                            .normalized()};
    const Mat3 r = randomRotation(500 + trial);
    const PointSample rotated{center + r * (s.position - center), r * s.normal};
    const Feature a = encodePoint(enc, rotated, center);
    const Feature b = encodePoint(enc, s, center) * r.transpose();
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("encodeVoxel of one sample equals encodePoint") {
  const EncoderParams enc = makeEncoder(4);
  const PointSample s{Vec3(0.02, -0.01, 0.04), Vec3::UnitZ()};
  const Feature a = encodePoint(enc, s, Vec3::Zero());
  const PointCloud one{s};
  const Feature b = encodeVoxel(enc, one, Vec3::Zero());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encodeVoxel two-path rotation property on 64 samples") {
  const EncoderParams enc = makeEncoder(5);
  const Vec3 center(0.15, 0.25, -0.05);
  const PointCloud cloud = randomSamples(64, center, 0.1, 77);
  const Mat3 r = randomRotation(1234);
  const Feature direct = encodeVoxel(enc, rotateAbout(cloud, r, center), center);
  const Feature latent = encodeVoxel(enc, cloud, center) * r.transpose();
  CHECK((direct - latent).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("encodeVoxel depends only on positions relative to the center") {
  const EncoderParams enc = makeEncoder(6);
  // Positions and shift on a 2^-20 grid keep the shifted additions exact,
  // so the invariance is bit-level, not approximate.
  const auto snap = [](double v) { return std::round(v * 1048576.0) / 1048576.0; };
  PointCloud cloud = randomSamples(32, Vec3::Zero(), 0.1, 88);
  for (auto& s : cloud) {
    s.position = s.position.unaryExpr(snap);
  }
  const Vec3 shift(12.25, -4.5, 6.75);
  PointCloud shifted = cloud;
  for (auto& s : shifted) {
    s.position += shift;
  }
  const Feature a = encodeVoxel(enc, cloud, Vec3::Zero());
  const Feature b = encodeVoxel(enc, shifted, shift);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encodeVoxel is permutation invariant") {
  const EncoderParams enc = makeEncoder(7);
  PointCloud cloud = randomSamples(48, Vec3::Zero(), 0.1, 99);
  const Feature a = encodeVoxel(enc, cloud, Vec3::Zero());
  std::reverse(cloud.begin(), cloud.end());
  const Feature b = encodeVoxel(enc, cloud, Vec3::Zero());
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
  const PointCloud empty;
  CHECK_THROWS_AS(encodeVoxel(enc, empty, Vec3::Zero()), EmptyInputError);
}

TEST_CASE("decodeSdf always yields positive sigma") {
  const Codec codec = makeCodec(8);
  InitRng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const Feature f = randomFeature(18, rng, 0.2);
    const Vec3 q(uniformIn(rng, -0.05, 0.05), uniformIn(rng, -0.05, 0.05),
                 uniformIn(rng, -0.05, 0.05));
    const SdfPrediction p = decodeSdf(codec, f, q);
    CHECK(p.stddev > 0.0);
    CHECK(std::isfinite(p.mean));
  }
}

TEST_CASE("gaussianNll hand values and domain error") {
  CHECK(gaussianNll(1.0, 1.0, 1.0) == 0.0);
  CHECK(gaussianNll(2.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(gaussianNll(0.0, 0.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(gaussianNll(0.0, -1.0, 0.0), std::domain_error);

  const std::vector<double> mu{1.0, 2.0};
  const std::vector<double> sigma{1.0, 1.0};
  const std::vector<double> d{1.0, 1.0};
  CHECK(gaussianNll(mu, sigma, d) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gaussianNll gradient in mu matches central differences") {
  InitRng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const double mu = uniformIn(rng, -1, 1);
    const double sigma = uniformIn(rng, 0.2, 2.0);
    const double d = uniformIn(rng, -1, 1);
    const double h = 1e-6;
    const double fd = (gaussianNll(mu + h, sigma, d) - gaussianNll(mu - h, sigma, d)) / (2 * h);
    const double analytic = -(d - mu) / (sigma * sigma);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-6));
  }
}

TEST_CASE("backpropagated training gradients match finite differences") {
  // Small instance keeps the finite-difference sweep cheap.
  Codec codec;
  codec.encoder = makeEncoder(10, 4, 2);
  codec.decoder = makeDecoder(10, 2, {8, 8});
  codec.voxelSize = 0.1;

  TrainingItem item;
  item.center = Vec3(0.05, 0.05, 0.05);
  InitRng rng(11);
  for (int i = 0; i < 6; ++i) {
    Vec3 p(uniformIn(rng, -0.08, 0.08), uniformIn(rng, -0.08, 0.08), uniformIn(rng, -0.08, 0.08));
    Vec3 n(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1));
    item.context.push_back({item.center + p, n.normalized()});
  }
  for (int i = 0; i < 5; ++i) {
    item.targets.emplace_back(Vec3(uniformIn(rng, -0.05, 0.05), uniformIn(rng, -0.05, 0.05),
                                   uniformIn(rng, -0.05, 0.05)),
                              uniformIn(rng, -0.08, 0.08));
  }

  CodecGrads grads = CodecGrads::zeroLike(codec);
  lossAndGradients(codec, item, &grads);

  // Probe a spread of coordinates in every tensor.
  struct Probe {
    Eigen::MatrixXd* param;
    const Eigen::MatrixXd* grad;
  };
  std::vector<Probe> probes = {
      {&codec.encoder.point.lin1.weight, &grads.point.lin1},
      {&codec.encoder.point.relu1.featMap, &grads.point.relu1F},
      {&codec.encoder.point.relu1.dirMap, &grads.point.relu1U},
      {&codec.encoder.point.lin2.weight, &grads.point.lin2},
      {&codec.encoder.point.relu2.featMap, &grads.point.relu2F},
      {&codec.encoder.point.relu2.dirMap, &grads.point.relu2U},
      {&codec.encoder.point.lin3.weight, &grads.point.lin3},
      {&codec.encoder.normal.lin2.weight, &grads.normal.lin2},
      {&codec.encoder.normal.relu2.dirMap, &grads.normal.relu2U},
      {&codec.decoder.weights[0], &grads.decoderWeights[0]},
      {&codec.decoder.weights[1], &grads.decoderWeights[1]},
      {&codec.decoder.weights[2], &grads.decoderWeights[2]},
  };
  const double h = 1e-5;
  int checked = 0;
  for (const Probe& probe : probes) {
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::Index r = rng.nextU64() % probe.param->rows();
      const Eigen::Index c = rng.nextU64() % probe.param->cols();
      const double saved = (*probe.param)(r, c);
      (*probe.param)(r, c) = saved + h;
      const double up = lossAndGradients(codec, item, nullptr);
      (*probe.param)(r, c) = saved - h;
      const double down = lossAndGradients(codec, item, nullptr);
      (*probe.param)(r, c) = saved;
      const double fd = (up - down) / (2 * h);
      const double analytic = (*probe.grad)(r, c);
      const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      CHECK(std::abs(fd - analytic) / scale <= 1e-4);
      ++checked;
    }
  }
  // Bias gradients too.
  for (std::size_t layer : {std::size_t{0}, codec.decoder.biases.size() - 1}) {
    for (int rep = 0; rep < 2; ++rep) {
      const Eigen::Index r = rng.nextU64() % codec.decoder.biases[layer].size();
      const double saved = codec.decoder.biases[layer](r);
      codec.decoder.biases[layer](r) = saved + h;
      const double up = lossAndGradients(codec, item, nullptr);
      codec.decoder.biases[layer](r) = saved - h;
      const double down = lossAndGradients(codec, item, nullptr);
      codec.decoder.biases[layer](r) = saved;
      const double fd = (up - down) / (2 * h);
      const double analytic = grads.decoderBiases[layer](r);
      const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      CHECK(std::abs(fd - analytic) / scale <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 40);
}

TEST_CASE("sphere and plane SDFs are analytic") {
  const Primitive sphere = Primitive::sphere(Vec3(0.1, 0.2, 0.3), 0.5);
  CHECK(sphere.sdf(Vec3(0.1, 0.2, 1.3)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sphere.sdf(Vec3(0.1, 0.2, 0.3)) == doctest::Approx(-0.5).epsilon(1e-12));

  const Primitive plane = Primitive::plane(Vec3::UnitZ(), 0.0);
  CHECK(plane.sdf(Vec3(3.0, -2.0, 0.7)) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(plane.sdf(Vec3(0.0, 0.0, -0.2)) == doctest::Approx(-0.2).epsilon(1e-12));

  const Primitive uni = Primitive::unionOf(sphere, plane);
  CHECK(uni.sdf(Vec3(0.0, 0.0, 0.9)) ==
        doctest::Approx(std::min(sphere.sdf(Vec3(0, 0, 0.9)), 0.9)).epsilon(1e-12));
}

TEST_CASE("box SDF matches a dense surface-sampling oracle") {
  const Vec3 half(0.2, 0.15, 0.1);
  const Primitive box = Primitive::box(Vec3::Zero(), half);

  // Dense lattice over all six faces.
  std::vector<Vec3> surface;
  const double spacing = 1e-3;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int nu = static_cast<int>(2 * half[u] / spacing);
    const int nv = static_cast<int>(2 * half[v] / spacing);
    for (double sign : {-1.0, 1.0}) {
      for (int iu = 0; iu <= nu; ++iu) {
        for (int iv = 0; iv <= nv; ++iv) {
          Vec3 p;
          p[axis] = sign * half[axis];
          p[u] = -half[u] + 2 * half[u] * iu / nu;
          p[v] = -half[v] + 2 * half[v] * iv / nv;
          surface.push_back(p);
        }
      }
    }
  }
  const KdTree3 tree(std::move(surface));

  InitRng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 q(uniformIn(rng, -0.35, 0.35), uniformIn(rng, -0.3, 0.3),
                 uniformIn(rng, -0.25, 0.25));
    const double unsignedDist = std::sqrt(tree.nearest(q).distSq);
    const bool inside = (q.cwiseAbs() - half).maxCoeff() < 0.0;
    const double oracle = inside ? -unsignedDist : unsignedDist;
    CHECK(std::abs(box.sdf(q) - oracle) <= 1e-3);
  }
}

TEST_CASE("samplePrimitiveSdf yields unit normals, true SDF values, determinism") {
  const Primitive shape = Primitive::unionOf(Primitive::sphere(Vec3(0.2, 0, 0), 0.4),
                                             Primitive::box(Vec3(-0.3, 0, 0), Vec3(0.2, 0.3, 0.25)));
  const PrimitiveSamples a = samplePrimitiveSdf(shape, 500, 7);
  const PrimitiveSamples b = samplePrimitiveSdf(shape, 500, 7);
  CHECK(a.surface.size() == 500);
  CHECK(a.queries.size() == 500);
  for (std::size_t i = 0; i < a.surface.size(); ++i) {
    CHECK(a.surface[i].normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(shape.sdf(a.surface[i].position)) <= 1e-9);
    CHECK((a.surface[i].position - b.surface[i].position).norm() == 0.0);
  }
  for (const auto& [q, sdf] : a.queries) {
    CHECK(sdf == doctest::Approx(shape.sdf(q)).epsilon(1e-12));
  }
}

TEST_CASE("short training run: loss decreases on a fixed sphere set, fully deterministic") {
  TrainerConfig cfg;
  cfg.seed = 3;
  cfg.iterations = 100;
  cfg.batchVoxels = 8;
  cfg.maxContext = 32;
  cfg.maxTargets = 16;
  cfg.spheres = 1;
  cfg.boxes = 0;
  cfg.planes = 0;
  cfg.unions = 0;
  cfg.samplesPerShape = 6000;
  cfg.evalEvery = 10;

  TrainReport report;
  const Codec codec = trainCodec(cfg, &report);
  REQUIRE(report.lossHistory.size() == 100);
  REQUIRE(report.holdoutHistory.size() == 10);

  // Mini-batch descent bounces a little between nearby checkpoints, so the
  // decrease is asserted at window-10 granularity: every checkpoint beats
  // the initial value, the late phase separates cleanly from the early
  // phase, and the total drop is large.
  for (const double v : report.holdoutHistory) {
    CHECK(v < report.initialHoldoutNll);
  }
  const double earlyFloor = std::min(report.holdoutHistory[0], report.holdoutHistory[1]);
  for (std::size_t i = 5; i < report.holdoutHistory.size(); ++i) {
    CHECK(report.holdoutHistory[i] < earlyFloor);
  }
  CHECK(report.holdoutHistory.back() < report.initialHoldoutNll - 0.9);

  const auto smooth = [&](std::size_t start) {
    double s = 0;
    for (std::size_t i = start; i < start + 10; ++i) {
      s += report.lossHistory[i];
    }
    return s / 10.0;
  };
  for (std::size_t d = 1; d < 10; ++d) {
    CHECK(smooth(10 * d) < smooth(0));
  }
  CHECK(smooth(90) < smooth(0) - 0.9);

  const Codec codec2 = trainCodec(cfg, nullptr);
  std::stringstream bufA, bufB;
  serializeCodec(codec, bufA);
  serializeCodec(codec2, bufB);
  CHECK(bufA.str() == bufB.str());
}
