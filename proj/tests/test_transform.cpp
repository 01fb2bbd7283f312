#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "nimap/transform.hpp"
#include "test_support.hpp"

using namespace nimap;
using namespace nimap::testsupport;

namespace {

PointCloud voxelSamples(const Vec3& center, int n, std::uint64_t seed, double spread = 0.09) {
  InitRng rng(seed);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    Vec3 p(uniformIn(rng, -spread, spread), uniformIn(rng, -spread, spread),
           uniformIn(rng, -spread, spread));
    Vec3 nrm(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1));
    if (nrm.norm() < 1e-6) {
      nrm = Vec3::UnitX();
    }
    cloud.push_back({center + p, nrm.normalized()});
  }
  return cloud;
}

FrameLocalMap singleVoxelLocalMap(const Codec& codec, const GridSpec& grid,
                                  const VoxelIndex& idx, std::uint64_t seed) {
  const Vec3 center = grid.centerOf(idx);
  const PointCloud cloud = voxelSamples(center, 40, seed, 0.55 * grid.voxelSize);
  LocalMapParams params;
  params.minPoints = 8;
  return buildLocalMap(codec, cloud, grid, params, 0);
}

}  // namespace

TEST_CASE("pose validation rejects non-rotations") {
  SE3Pose scaled;
  scaled.rotation = 1.5 * Mat3::Identity();
  CHECK_THROWS_AS(validatePose(scaled), PoseError);
  SE3Pose mirror;
  mirror.rotation = Mat3::Identity();
  mirror.rotation(0, 0) = -1.0;  // reflection, det -1
  CHECK_THROWS_AS(validatePose(mirror), PoseError);
  SE3Pose fine;
  fine.rotation = randomRotation(3);
  validatePose(fine);  // no throw
}

TEST_CASE("pose compose and inverse") {
  SE3Pose a;
  a.rotation = randomRotation(10);
  a.translation = Vec3(0.3, -0.7, 1.1);
  SE3Pose b;
  b.rotation = randomRotation(11);
  b.translation = Vec3(-1.0, 0.2, 0.5);
  const Vec3 p(0.4, 0.5, -0.6);
  CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() <= 1e-14);
  CHECK((a.compose(a.inverse()).apply(p) - p).norm() <= 1e-12);
}

TEST_CASE("computeJacobian: constant encoder has zero Jacobian") {
  const PointCloud cloud = voxelSamples(Vec3::Zero(), 10, 1);
  const auto constantEncoder = [](std::span<const PointSample>, const Vec3&) {
    return Feature::Constant(4, 3, 1.25);
  };
  const JacobianBlock jac = computeJacobianWith(constantEncoder, cloud, Vec3::Zero(), 0.01);
  for (int p = 0; p < 3; ++p) {
    CHECK(jac.cols[p].cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(jac.deltaT == 0.01);
}

TEST_CASE("computeJacobian: mean-of-relative-positions encoder matches the analytic derivative") {
  const Vec3 center(0.05, 0.05, 0.05);
  const PointCloud cloud = voxelSamples(center, 25, 2);
  // Every channel is the mean relative position; d(feature)/d(t_p) = e_p per row.
  const auto linearEncoder = [](std::span<const PointSample> samples, const Vec3& c) {
    Vec3 mean = Vec3::Zero();
    for (const PointSample& s : samples) {
      mean += s.position - c;
    }
    mean /= static_cast<double>(samples.size());
    Feature f(4, 3);
    for (int r = 0; r < 4; ++r) {
      f.row(r) = mean.transpose();
    }
    return f;
  };
  const JacobianBlock jac = computeJacobianWith(linearEncoder, cloud, center, 0.01);
  for (int p = 0; p < 3; ++p) {
    Feature expected = Feature::Zero(4, 3);
    expected.col(p).setOnes();
    CHECK((jac.cols[p] - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("computeJacobian: linearization error shrinks with the step (real encoder)") {
  const Codec codec = makeCodec(12);
  const Vec3 center(0.05, -0.05, 0.15);
  const PointCloud cloud = voxelSamples(center, 50, 3);
  const double deltaT = 0.01;
  const JacobianBlock jac = computeJacobian(codec.encoder, cloud, center, deltaT);
  const Feature base = encodeVoxel(codec.encoder, cloud, center);

  InitRng rng(4);
  double errSmall = 0.0, errLarge = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 dir(uniformIn(rng, -1, 1), uniformIn(rng, -1, 1), uniformIn(rng, -1, 1));
    dir.normalize();
    for (const double scale : {0.2 * deltaT, deltaT}) {
      const Vec3 t = scale * dir;
      PointCloud shifted = cloud;
      for (auto& s : shifted) {
        s.position += t;
      }
      const Feature truth = encodeVoxel(codec.encoder, shifted, center);
      const Feature predicted = base + jac.apply(t);
      const double err = (truth - predicted).cwiseAbs().maxCoeff();
      (scale == deltaT ? errLarge : errSmall) += err;
    }
  }
  CHECK(errSmall <= errLarge);
  CHECK(errLarge > 0.0);
}

TEST_CASE("computeJacobian: half-step estimate stays within the estimate magnitude") {
  const Codec codec = makeCodec(13);
  const Vec3 center(0.15, 0.05, 0.05);
  const PointCloud cloud = voxelSamples(center, 60, 5);
  const JacobianBlock full = computeJacobian(codec.encoder, cloud, center, 0.01);
  const JacobianBlock half = computeJacobian(codec.encoder, cloud, center, 0.005);
  for (int p = 0; p < 3; ++p) {
    const double diff = (full.cols[p] - half.cols[p]).cwiseAbs().maxCoeff();
    const double magnitude = std::max(full.cols[p].cwiseAbs().maxCoeff(),
                                      half.cols[p].cwiseAbs().maxCoeff());
    CHECK(diff <= magnitude);
  }
}

TEST_CASE("transformLocalMap: identity pose is bit-exact") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(14);
  const FrameLocalMap local = singleVoxelLocalMap(codec, grid, {0, 1, 2}, 6);
  const auto out = transformLocalMap(local, SE3Pose{});
  REQUIRE(out.size() == local.map.size());
  const VoxelIndex idx = local.map.sortedIndices().front();
  const PLIVox& v = *local.map.find(idx);
  const TransformedVoxel& tv = out.front();
  CHECK((tv.center - v.center).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tv.feature - v.feature).cwiseAbs().maxCoeff() == 0.0);
  CHECK(tv.weight == v.weight);
  for (int p = 0; p < 3; ++p) {
    CHECK((tv.jacobian.cols[p] - local.jacobians.at(idx).cols[p]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("transformLocalMap: 90-degree turn moves the center as hand-computed") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(15);
  // Voxel (0,1,2) has center (0.05, 0.15, 0.25).
  const FrameLocalMap local = singleVoxelLocalMap(codec, grid, {0, 1, 2}, 7);
  const SE3Pose pose = latticePose(2, 1, Eigen::Vector3i::Zero(), grid.voxelSize);
  const auto out = transformLocalMap(local, pose);
  bool found = false;
  for (const TransformedVoxel& tv : out) {
    if ((tv.center - Vec3(-0.15, 0.05, 0.25)).cwiseAbs().maxCoeff() <= 1e-15) {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("transformLocalMap: feature rows transform as vectors (two-path check)") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(16);
  const VoxelIndex idx{1, -1, 0};
  const Vec3 center = grid.centerOf(idx);
  const PointCloud cloud = voxelSamples(center, 40, 8, 0.045);
  LocalMapParams params;
  params.minPoints = 8;
  const FrameLocalMap local = buildLocalMap(codec, cloud, grid, params, 0);
  REQUIRE(local.map.find(idx) != nullptr);

  // Rotate about this voxel's center so the center stays put.
  const Mat3 r = randomRotation(99);
  SE3Pose pose;
  pose.rotation = r;
  pose.translation = center - r * center;

  const auto out = transformLocalMap(local, pose);
  const TransformedVoxel* tv = nullptr;
  for (const TransformedVoxel& candidate : out) {
    if ((candidate.center - center).cwiseAbs().maxCoeff() <= 1e-12) {
      tv = &candidate;
    }
  }
  REQUIRE(tv != nullptr);

  PointCloud rotated;
  for (const PointSample& s : cloud) {
    rotated.push_back({center + r * (s.position - center), r * s.normal});
  }
  const Feature direct = encodeVoxel(codec.encoder, rotated, center);
  CHECK((direct - tv->feature).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("transform composition: T2 after T1 equals the composed pose") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(17);
  FrameLocalMap local = singleVoxelLocalMap(codec, grid, {2, 0, -1}, 9);

  SE3Pose t1;
  t1.rotation = randomRotation(21);
  t1.translation = Vec3(0.13, -0.07, 0.22);
  SE3Pose t2;
  t2.rotation = randomRotation(22);
  t2.translation = Vec3(-0.31, 0.05, 0.04);

  const auto afterT1 = transformLocalMap(local, t1);
  const auto composed = transformLocalMap(local, t2.compose(t1));
  std::vector<TransformedVoxel> sequential = afterT1;
  for (TransformedVoxel& tv : sequential) {
    tv.center = t2.apply(tv.center);
    tv.feature = tv.feature * t2.rotation.transpose();
    tv.jacobian = transformJacobian(tv.jacobian, t2.rotation);
  }
  REQUIRE(sequential.size() == composed.size());
  for (std::size_t i = 0; i < composed.size(); ++i) {
    CHECK((sequential[i].center - composed[i].center).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((sequential[i].feature - composed[i].feature).cwiseAbs().maxCoeff() <= 1e-10);
    for (int p = 0; p < 3; ++p) {
      CHECK((sequential[i].jacobian.cols[p] - composed[i].jacobian.cols[p])
                .cwiseAbs()
                .maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("interpolateToGrid: coincident source copies through exactly") {
  const GridSpec grid{0.1, Vec3::Zero()};
  InitRng rng(30);
  TransformedVoxel source;
  source.center = grid.centerOf({3, -2, 1});
  source.feature = randomFeature(18, rng);
  for (int p = 0; p < 3; ++p) {
    source.jacobian.cols[p] = randomFeature(18, rng);
  }
  source.weight = 4.5;
  const std::vector<TransformedVoxel> sources{source};
  const ImplicitMap out = interpolateToGrid(sources, grid, 8);
  REQUIRE(out.size() == 1);
  const PLIVox* v = out.find({3, -2, 1});
  REQUIRE(v != nullptr);
  CHECK((v->feature - source.feature).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v->weight == source.weight);
}

TEST_CASE("interpolateToGrid: two equidistant sources weigh 0.5 each") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Vec3 target = grid.centerOf({0, 0, 0});
  TransformedVoxel a, b;
  a.center = target + Vec3(0.03, 0.0, 0.0);
  b.center = target - Vec3(0.03, 0.0, 0.0);
  a.feature = Feature::Constant(2, 3, 1.0);
  b.feature = Feature::Constant(2, 3, 3.0);
  for (int p = 0; p < 3; ++p) {
    a.jacobian.cols[p] = Feature::Zero(2, 3);
    b.jacobian.cols[p] = Feature::Zero(2, 3);
  }
  a.weight = 2.0;
  b.weight = 6.0;
  const std::vector<TransformedVoxel> sources{a, b};
  const ImplicitMap out = interpolateToGrid(sources, grid, 8);
  const PLIVox* v = out.find({0, 0, 0});
  REQUIRE(v != nullptr);
  CHECK(v->feature(0, 0) == doctest::Approx(2.0).epsilon(1e-12));  // (1 + 3) / 2
  CHECK(v->weight == doctest::Approx(4.0).epsilon(1e-12));         // (2 + 6) / 2
}

TEST_CASE("interpolateToGrid: softmax weights match the hand-evaluated values") {
  // Distances^2 of 0 and 0.01: s1 = 1/(1+e^-0.01), s2 = 1 - s1.
  const GridSpec grid{0.2, Vec3::Zero()};
  const Vec3 target = grid.centerOf({0, 0, 0});
  TransformedVoxel a, b;
  a.center = target;
  b.center = target + Vec3(0.1, 0.0, 0.0);
  a.feature = Feature::Constant(1, 3, 1.0);
  b.feature = Feature::Constant(1, 3, 0.0);
  for (int p = 0; p < 3; ++p) {
    a.jacobian.cols[p] = Feature::Zero(1, 3);
    b.jacobian.cols[p] = Feature::Zero(1, 3);
  }
  a.weight = 1.0;
  b.weight = 2.0;
  const std::vector<TransformedVoxel> sources{a, b};
  const ImplicitMap out = interpolateToGrid(sources, grid, 8);
  const PLIVox* v = out.find({0, 0, 0});
  REQUIRE(v != nullptr);
  const double s1 = 1.0 / (1.0 + std::exp(-0.01));
  CHECK(s1 == doctest::Approx(0.502499979).epsilon(1e-7));
  CHECK(v->feature(0, 0) == doctest::Approx(s1).epsilon(1e-9));
  CHECK(v->weight == doctest::Approx(1.0 * s1 + 2.0 * (1.0 - s1)).epsilon(1e-9));
}

TEST_CASE("interpolateToGrid: weights are a convex combination (sum to one)") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(18);
  const PointCloud cloud = sphereCloud(Vec3(0.02, -0.01, 0.03), 0.3, 4000, 31);
  LocalMapParams params;
  const FrameLocalMap local = buildLocalMap(codec, cloud, grid, params, 0);

  // Unit source weights turn w_n into the weight sum itself.
  FrameLocalMap unit = local;
  std::vector<VoxelIndex> idxs = unit.map.sortedIndices();
  for (const VoxelIndex& idx : idxs) {
    unit.map.insert(idx, unit.map.find(idx)->feature, 1.0);
  }
  SE3Pose pose;
  pose.rotation = randomRotation(51);
  pose.translation = Vec3(0.037, -0.011, 0.052);
  const ImplicitMap out = transformAndInterpolate(unit, pose, grid, 8);
  REQUIRE(out.size() > 10);
  // w_n = sum s . 1: the normalized weights sum to one on every target.
  for (const auto& [idx, v] : out.voxels()) {
    CHECK(std::abs(v.weight - 1.0) <= 1e-12);
  }
  // K = 1 degenerates to nearest-source copy semantics: weight exactly 1.
  const ImplicitMap nearest = transformAndInterpolate(unit, pose, grid, 1);
  for (const auto& [idx, v] : nearest.voxels()) {
    CHECK(v.weight == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("interpolateToGrid validates K and handles no sources") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const std::vector<TransformedVoxel> none;
  CHECK(interpolateToGrid(none, grid, 8).empty());
  TransformedVoxel v;
  v.center = Vec3::Zero();
  v.feature = Feature::Zero(1, 3);
  v.weight = 1.0;
  for (int p = 0; p < 3; ++p) {
    v.jacobian.cols[p] = Feature::Zero(1, 3);
  }
  const std::vector<TransformedVoxel> one{v};
  CHECK_THROWS_AS(interpolateToGrid(one, grid, 0), DimensionError);
}

TEST_CASE("remapFrame: re-posing to the recorded pose is a no-op") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(19);
  const PointCloud cloud = sphereCloud(Vec3::Zero(), 0.3, 5000, 41);
  LocalMapParams params;
  FrameLocalMap local = buildLocalMap(codec, cloud, grid, params, 0);
  SE3Pose pose;
  pose.rotation = randomRotation(61);
  pose.translation = Vec3(0.4, 0.1, -0.2);
  local.fusedPose = pose;

  ImplicitMap fusedCache = transformAndInterpolate(local, pose, grid, 8);
  ImplicitMap global(grid);
  fuse(global, fusedCache);
  const ImplicitMap before = global;

  remapFrame(global, local, fusedCache, pose, 8);
  REQUIRE(global.size() == before.size());
  for (const auto& [idx, v] : before.voxels()) {
    const PLIVox* w = global.find(idx);
    REQUIRE(w != nullptr);
    CHECK(std::abs(v.weight - w->weight) <= 1e-9);
    CHECK((v.feature - w->feature).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("lattice-preserving transforms commute with encoding per voxel") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(20);
  const PointCloud cloud = sphereCloud(Vec3(0.01, 0.02, -0.01), 0.32, 6000, 51);
  LocalMapParams params;
  const FrameLocalMap local = buildLocalMap(codec, cloud, grid, params, 0);
  const SE3Pose pose = latticePose(1, 1, Eigen::Vector3i(2, -1, 3), grid.voxelSize);

  const ImplicitMap latent = transformAndInterpolate(local, pose, grid, 8);
  const ImplicitMap direct =
      encodeFrameToMap(codec, transformCloud(cloud, pose), grid, params.minPoints);

  REQUIRE(latent.size() == direct.size());
  double maxErr = 0.0;
  for (const auto& [idx, v] : direct.voxels()) {
    const PLIVox* w = latent.find(idx);
    REQUIRE(w != nullptr);
    CHECK(std::abs(v.weight - w->weight) <= 1e-9);
    maxErr = std::max(maxErr, (v.feature - w->feature).cwiseAbs().maxCoeff());
  }
  CHECK(maxErr <= 1e-6);
}
