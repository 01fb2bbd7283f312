#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "nimap/map.hpp"
#include "nimap/transform.hpp"
#include "test_support.hpp"

using namespace nimap;
using namespace nimap::testsupport;

namespace {

Feature constantFeature(Eigen::Index rows, double value) {
  return Feature::Constant(rows, 3, value);
}

ImplicitMap randomMap(const GridSpec& grid, int voxels, std::uint64_t seed,
                      bool integerWeights = false) {
  InitRng rng(seed);
  ImplicitMap map(grid);
  std::set<std::array<std::int32_t, 3>> used;
  while (static_cast<int>(map.size()) < voxels) {
    VoxelIndex idx{static_cast<std::int32_t>(rng.nextU64() % 17) - 8,
                   static_cast<std::int32_t>(rng.nextU64() % 17) - 8,
                   static_cast<std::int32_t>(rng.nextU64() % 17) - 8};
    const double w = integerWeights ? static_cast<double>(1 + rng.nextU64() % 50)
                                    : uniformIn(rng, 0.1, 20.0);
    map.insert(idx, randomFeature(18, rng), w);
  }
  return map;
}

std::string mapBytes(const ImplicitMap& map) {
  std::stringstream buf;
  serializeMap(map, buf);
  return buf.str();
}

}  // namespace

TEST_CASE("grid indexing: half-open boxes, derived centers") {
  const GridSpec grid{0.1, Vec3::Zero()};
  // Point exactly on the face between voxels 0 and 1 belongs to voxel 1.
  CHECK(grid.indexOf(Vec3(0.1, 0.0, 0.0)).x == 1);
  CHECK(grid.indexOf(Vec3(0.1 - 1e-12, 0.0, 0.0)).x == 0);
  CHECK(grid.indexOf(Vec3(-0.05, 0.0, 0.0)).x == -1);
  const VoxelIndex idx{2, -3, 0};
  const Vec3 c = grid.centerOf(idx);
  CHECK(c.x() == 0.1 * 2.5);
  CHECK(c.y() == 0.1 * -2.5);
  CHECK(c.z() == 0.1 * 0.5);
}

TEST_CASE("voxelize: a point at a voxel center reaches the 2x cubes that contain it") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const PointCloud one{{grid.centerOf({3, 4, 5}), Vec3::UnitZ()}};

  // Gathering census (no occupancy filter): exactly the 8 cells whose
  // 2x-length cube holds the point, i.e. {i, i+1} per axis for a center point.
  const Voxelization all = voxelize(one, grid, 0);
  CHECK(all.size() == 8);
  for (const auto& [idx, bucket] : all) {
    CHECK(bucket.gathered.size() == 1);
    CHECK(idx.x >= 3);
    CHECK(idx.x <= 4);
    CHECK(idx.y >= 4);
    CHECK(idx.y <= 5);
    CHECK(idx.z >= 5);
    CHECK(idx.z <= 6);
    // Half-open membership: p - center in [-vs, vs) per axis. Assembled
    // in index space, so allow rounding slack at the exact -vs boundary.
    const Vec3 d = one[0].position - grid.centerOf(idx);
    for (int a = 0; a < 3; ++a) {
      CHECK(d[a] >= -0.1 - 1e-12);
      CHECK(d[a] < 0.1);
    }
  }

  // With the occupancy filter only the owning voxel remains.
  const Voxelization own = voxelize(one, grid, 1);
  REQUIRE(own.size() == 1);
  CHECK(own.begin()->first == VoxelIndex{3, 4, 5});
  CHECK(own.begin()->second.ownCount == 1);
}

TEST_CASE("voxelize: own-cube lists partition a random cloud exactly") {
  const GridSpec grid{0.1, Vec3(0.013, -0.02, 0.005)};
  InitRng rng(5);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i) {
    cloud.push_back({Vec3(uniformIn(rng, -0.4, 0.4), uniformIn(rng, -0.4, 0.4),
                          uniformIn(rng, -0.4, 0.4)),
                     Vec3::UnitZ()});
  }
  const Voxelization buckets = voxelize(cloud, grid, 1);
  std::size_t ownTotal = 0;
  for (const auto& [idx, bucket] : buckets) {
    ownTotal += bucket.ownCount;
  }
  CHECK(ownTotal == cloud.size());
  // Brute-force membership: every sample's floor cell is emitted and its
  // gathered list holds the sample.
  for (const PointSample& s : cloud) {
    const VoxelIndex own = grid.indexOf(s.position);
    auto it = buckets.find(own);
    REQUIRE(it != buckets.end());
    bool found = false;
    for (const PointSample& g : it->second.gathered) {
      if (g.position == s.position) {
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("voxelize: gathered lists match the brute-force 2x-cube oracle") {
  const GridSpec grid{0.1, Vec3::Zero()};
  InitRng rng(6);
  PointCloud cloud;
  for (int i = 0; i < 400; ++i) {
    cloud.push_back({Vec3(uniformIn(rng, -0.2, 0.2), uniformIn(rng, -0.2, 0.2),
                          uniformIn(rng, -0.2, 0.2)),
                     Vec3::UnitZ()});
  }
  const Voxelization buckets = voxelize(cloud, grid, 0);
  for (const auto& [idx, bucket] : buckets) {
    const Vec3 c = grid.centerOf(idx);
    std::size_t expected = 0;
    for (const PointSample& s : cloud) {
      const Vec3 d = s.position - c;
      if (d.x() >= -0.1 && d.x() < 0.1 && d.y() >= -0.1 && d.y() < 0.1 && d.z() >= -0.1 &&
          d.z() < 0.1) {
        ++expected;
      }
    }
    CHECK(bucket.gathered.size() == expected);
  }
}

TEST_CASE("voxelize is translation covariant") {
  InitRng rng(7);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.push_back({Vec3(uniformIn(rng, -0.3, 0.3), uniformIn(rng, -0.3, 0.3),
                          uniformIn(rng, -0.3, 0.3)),
                     Vec3::UnitZ()});
  }
  const Vec3 shift(1.7, -0.9, 2.3);
  PointCloud shifted = cloud;
  for (auto& s : shifted) {
    s.position += shift;
  }
  const GridSpec gridA{0.1, Vec3::Zero()};
  const GridSpec gridB{0.1, shift};
  const Voxelization a = voxelize(cloud, gridA, 1);
  const Voxelization b = voxelize(shifted, gridB, 1);
  REQUIRE(a.size() == b.size());
  for (const auto& [idx, bucket] : a) {
    auto it = b.find(idx);
    REQUIRE(it != b.end());
    CHECK(it->second.ownCount == bucket.ownCount);
    CHECK(it->second.gathered.size() == bucket.gathered.size());
  }
}

TEST_CASE("buildLocalMap: occupancy oracle, weights, determinism") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const Codec codec = makeCodec(11);
  const PointCloud cloud = sphereCloud(Vec3(0.05, 0.0, -0.02), 0.35, 4000, 21);
  LocalMapParams params;
  params.minPoints = 8;
  const FrameLocalMap local = buildLocalMap(codec, cloud, grid, params, 7);

  // Brute-force occupancy: voxels with >= minPoints own samples.
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> ownCount;
  for (const PointSample& s : cloud) {
    ++ownCount[grid.indexOf(s.position)];
  }
  std::size_t expected = 0;
  for (const auto& [idx, n] : ownCount) {
    if (n >= params.minPoints) {
      ++expected;
      const PLIVox* v = local.map.find(idx);
      REQUIRE(v != nullptr);
      CHECK(v->weight == static_cast<double>(n));
      CHECK(local.jacobians.count(idx) == 1);
    }
  }
  CHECK(local.map.size() == expected);
  CHECK(local.frameId == 7);

  const FrameLocalMap again = buildLocalMap(codec, cloud, grid, params, 7);
  CHECK(mapBytes(local.map) == mapBytes(again.map));
  for (const auto& [idx, jac] : local.jacobians) {
    const JacobianBlock& other = again.jacobians.at(idx);
    for (int p = 0; p < 3; ++p) {
      CHECK((jac.cols[p] - other.cols[p]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("fuse: hand arithmetic, empty-voxel case, self-fusion") {
  const GridSpec grid{0.1, Vec3::Zero()};

  ImplicitMap g(grid);
  g.insert({0, 0, 0}, constantFeature(1, 2.0), 2.0);
  ImplicitMap l(grid);
  l.insert({0, 0, 0}, constantFeature(1, 5.0), 1.0);
  l.insert({1, 0, 0}, constantFeature(1, 7.0), 3.0);

  fuse(g, l);
  CHECK(g.size() == 2);
  CHECK(g.find({0, 0, 0})->feature(0, 0) == 3.0);  // (2*2 + 5*1) / 3
  CHECK(g.find({0, 0, 0})->weight == 3.0);
  CHECK(g.find({1, 0, 0})->feature(0, 1) == 7.0);  // inserted verbatim
  CHECK(g.find({1, 0, 0})->weight == 3.0);

  // Fusing a map with itself doubles weights, leaves features unchanged.
  ImplicitMap m = randomMap(grid, 20, 31);
  ImplicitMap copy = m;
  fuse(m, copy);
  for (const auto& [idx, v] : copy.voxels()) {
    CHECK(m.find(idx)->weight == 2.0 * v.weight);
    CHECK((m.find(idx)->feature - v.feature).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("remove: hand arithmetic, inverse of fuse, deletion, errors") {
  const GridSpec grid{0.1, Vec3::Zero()};

  ImplicitMap g(grid);
  g.insert({0, 0, 0}, constantFeature(1, 3.0), 3.0);
  ImplicitMap l(grid);
  l.insert({0, 0, 0}, constantFeature(1, 5.0), 1.0);
  remove(g, l);
  CHECK(g.find({0, 0, 0})->feature(0, 0) == 2.0);  // (9 - 5) / 2
  CHECK(g.find({0, 0, 0})->weight == 2.0);

  // remove(fuse(G, L), L) == G elementwise.
  ImplicitMap global = randomMap(grid, 40, 41);
  const ImplicitMap original = global;
  const ImplicitMap local = randomMap(grid, 25, 42);
  fuse(global, local);
  remove(global, local);
  REQUIRE(global.size() == original.size());
  for (const auto& [idx, v] : original.voxels()) {
    const PLIVox* got = global.find(idx);
    REQUIRE(got != nullptr);
    CHECK(std::abs(got->weight - v.weight) <= 1e-9);
    CHECK((got->feature - v.feature).cwiseAbs().maxCoeff() <= 1e-9);
  }

  // Removing a voxel's full weight deletes it.
  ImplicitMap g2(grid);
  g2.insert({2, 2, 2}, constantFeature(1, 1.0), 4.0);
  ImplicitMap l2(grid);
  l2.insert({2, 2, 2}, constantFeature(1, 1.0), 4.0);
  remove(g2, l2);
  CHECK(g2.empty());

  // Underflow within tolerance deletes as well.
  ImplicitMap g3(grid);
  g3.insert({2, 2, 2}, constantFeature(1, 1.0), 4.0);
  ImplicitMap l3(grid);
  l3.insert({2, 2, 2}, constantFeature(1, 1.0), 4.0 - 1e-8);
  remove(g3, l3);
  CHECK(g3.empty());

  // Removing more than present is a consistency error.
  ImplicitMap g4(grid);
  g4.insert({0, 0, 0}, constantFeature(1, 1.0), 1.0);
  ImplicitMap l4(grid);
  l4.insert({0, 0, 0}, constantFeature(1, 1.0), 2.0);
  CHECK_THROWS_AS(remove(g4, l4), ConsistencyError);

  // As is removing a voxel the global map does not hold.
  ImplicitMap g5(grid);
  g5.insert({0, 0, 0}, constantFeature(1, 1.0), 1.0);
  ImplicitMap l5(grid);
  l5.insert({9, 9, 9}, constantFeature(1, 1.0), 1.0);
  CHECK_THROWS_AS(remove(g5, l5), ConsistencyError);
}

TEST_CASE("fuse/remove demand identical lattices") {
  ImplicitMap a(GridSpec{0.1, Vec3::Zero()});
  ImplicitMap b(GridSpec{0.2, Vec3::Zero()});
  b.insert({0, 0, 0}, constantFeature(1, 1.0), 1.0);
  CHECK_THROWS_AS(fuse(a, b), GridError);
  CHECK_THROWS_AS(remove(a, b), GridError);
  ImplicitMap c(GridSpec{0.1, Vec3(0.05, 0, 0)});
  c.insert({0, 0, 0}, constantFeature(1, 1.0), 1.0);
  CHECK_THROWS_AS(fuse(a, c), GridError);
}

TEST_CASE("fuse is commutative and associative up to rounding") {
  const GridSpec grid{0.1, Vec3::Zero()};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ImplicitMap a = randomMap(grid, 30, 100 + seed);
    const ImplicitMap b = randomMap(grid, 30, 200 + seed);
    const ImplicitMap c = randomMap(grid, 30, 300 + seed);

    ImplicitMap ab = a;
    fuse(ab, b);
    ImplicitMap ba = b;
    fuse(ba, a);
    REQUIRE(ab.size() == ba.size());
    for (const auto& [idx, v] : ab.voxels()) {
      const PLIVox* w = ba.find(idx);
      REQUIRE(w != nullptr);
      CHECK(std::abs(v.weight - w->weight) <= 1e-9);
      CHECK((v.feature - w->feature).cwiseAbs().maxCoeff() <= 1e-9);
    }

    ImplicitMap abc1 = ab;
    fuse(abc1, c);
    ImplicitMap bc = b;
    fuse(bc, c);
    ImplicitMap abc2 = a;
    fuse(abc2, bc);
    for (const auto& [idx, v] : abc1.voxels()) {
      const PLIVox* w = abc2.find(idx);
      REQUIRE(w != nullptr);
      CHECK(std::abs(v.weight - w->weight) <= 1e-9);
      CHECK((v.feature - w->feature).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("total weight is conserved exactly for integer masses") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const ImplicitMap a = randomMap(grid, 50, 71, /*integerWeights=*/true);
  const ImplicitMap b = randomMap(grid, 50, 72, /*integerWeights=*/true);
  double totalA = 0, totalB = 0;
  for (const auto& [idx, v] : a.voxels()) totalA += v.weight;
  for (const auto& [idx, v] : b.voxels()) totalB += v.weight;
  ImplicitMap fused = a;
  fuse(fused, b);
  double totalF = 0;
  for (const auto& [idx, v] : fused.voxels()) totalF += v.weight;
  CHECK(totalF == totalA + totalB);  // exact: all masses are small integers
}

TEST_CASE("map serialization: round trip, empty map, layout arithmetic") {
  const GridSpec grid{0.1, Vec3(0.25, -1.5, 3.0)};
  const ImplicitMap map = randomMap(grid, 1000, 55);

  std::stringstream buf;
  serializeMap(map, buf);
  ImplicitMap back = deserializeMap(buf);
  REQUIRE(back.size() == map.size());
  CHECK(back.grid().voxelSize == map.grid().voxelSize);
  CHECK((back.grid().origin - map.grid().origin).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& [idx, v] : map.voxels()) {
    const PLIVox* w = back.find(idx);
    REQUIRE(w != nullptr);
    // float32 storage
    CHECK(std::abs(v.weight - w->weight) <= 2e-6 * std::abs(v.weight));
    CHECK((v.feature - w->feature).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((w->center - grid.centerOf(idx)).cwiseAbs().maxCoeff() == 0.0);
  }
  // Quantized values round-trip losslessly.
  std::stringstream buf2(mapBytes(back));
  CHECK(mapBytes(back) == mapBytes(deserializeMap(buf2)));

  // Layout: header 52 bytes + N * (12 index + 4 weight + 18*3*4 feature).
  CHECK(mapBytes(map).size() == 52 + map.size() * (12 + 4 + 216));
  CHECK(mapStats(map).fileSizeBytes == mapBytes(map).size());

  const ImplicitMap empty(grid);
  CHECK(mapBytes(empty).size() == 52);
  std::stringstream bufEmpty(mapBytes(empty));
  CHECK(deserializeMap(bufEmpty).empty());
}

TEST_CASE("map serialization rejects corruption") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const ImplicitMap map = randomMap(grid, 5, 66);
  const std::string bytes = mapBytes(map);
  {
    std::string bad = bytes;
    bad[1] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS_AS(deserializeMap(in), FormatError);
  }
  {
    std::string bad = bytes;
    bad[4] = 9;  // version
    std::stringstream in(bad);
    CHECK_THROWS_AS(deserializeMap(in), FormatError);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 7));
    CHECK_THROWS_AS(deserializeMap(in), FormatError);
  }
}

TEST_CASE("mapStats: empty, single, recount oracle") {
  const GridSpec grid{0.1, Vec3::Zero()};
  const ImplicitMap empty(grid);
  const MapStats se = mapStats(empty);
  CHECK(se.voxelCount == 0);
  CHECK(se.totalWeight == 0.0);

  ImplicitMap one(grid);
  one.insert({0, 0, 0}, constantFeature(18, 1.0), 2.5);
  const MapStats s1 = mapStats(one);
  CHECK(s1.voxelCount == 1);
  CHECK(s1.totalWeight == 2.5);
  CHECK(s1.bboxMin.x() == doctest::Approx(0.0));
  CHECK(s1.bboxMax.x() == doctest::Approx(0.1));

  const ImplicitMap map = randomMap(grid, 64, 77);
  double recount = 0;
  for (const auto& [idx, v] : map.voxels()) {
    recount += v.weight;
  }
  CHECK(mapStats(map).voxelCount == 64);
  CHECK(mapStats(map).totalWeight == doctest::Approx(recount).epsilon(1e-12));
}

TEST_CASE("ImplicitMap::insert enforces the voxel invariants") {
  ImplicitMap map(GridSpec{0.1, Vec3::Zero()});
  CHECK_THROWS_AS(map.insert({0, 0, 0}, constantFeature(1, 1.0), 0.0), ConsistencyError);
  Feature bad = constantFeature(1, 1.0);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(map.insert({0, 0, 0}, bad, 1.0), ConsistencyError);
  map.insert({0, 0, 0}, constantFeature(2, 1.0), 1.0);
  CHECK_THROWS_AS(map.insert({1, 0, 0}, constantFeature(3, 1.0), 1.0), DimensionError);
}
