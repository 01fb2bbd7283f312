#include "nimap/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "marching_cubes_tables.hpp"

namespace nimap {

namespace {

struct FineKey {
  std::int64_t x, y, z;
  bool operator==(const FineKey&) const = default;
};

struct FineKeyHash {
  std::size_t operator()(const FineKey& k) const {
    std::size_t seed = std::hash<std::int64_t>()(k.x);
    seed ^= std::hash<std::int64_t>()(k.y) + 0x9e3779b9 + (seed << 6) + (seed >> 2);
    seed ^= std::hash<std::int64_t>()(k.z) + 0x9e3779b9 + (seed << 6) + (seed >> 2);
    return seed;
  }
};

struct EdgeKey {
  FineKey base;  // lower endpoint
  std::uint8_t axis;
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& k) const {
    return FineKeyHash()(k.base) * 31 + k.axis;
  }
};

struct SampleValue {
  double mu = 0.0;
  double sigma = 0.0;
};

// Bourke corner layout: 0..3 the bottom ring (z), 4..7 the top ring (z+1).
constexpr int kCornerOffset[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};
constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};
// Axis along which each edge runs (used for the canonical edge key).
constexpr std::uint8_t kEdgeAxis[12] = {0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};

}  // namespace

std::vector<SdfGrid> sampleSdf(const ImplicitMap& map, const Codec& codec, int resolution) {
  if (resolution < 2) {
    throw DimensionError("sampleSdf: resolution must be >= 2");
  }
  const std::vector<VoxelIndex> order = map.sortedIndices();
  std::vector<SdfGrid> grids(order.size());
  const double step = map.grid().voxelSize / (resolution - 1);

#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t vi = 0; vi < static_cast<std::ptrdiff_t>(order.size()); ++vi) {
    const VoxelIndex idx = order[vi];
    const PLIVox& voxel = *map.find(idx);
    SdfGrid& grid = grids[vi];
    grid.voxel = idx;
    grid.resolution = resolution;
    grid.origin = map.grid().origin;
    grid.step = step;
    grid.samples.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
    for (int k = 0; k < resolution; ++k) {
      for (int j = 0; j < resolution; ++j) {
        for (int i = 0; i < resolution; ++i) {
          const Vec3 local = grid.samplePosition(i, j, k) - voxel.center;
          grid.samples[i + resolution * (j + resolution * k)] =
              decodeSdf(codec, voxel.feature, local);
        }
      }
    }
  }
  return grids;
}

TriangleMesh extractMesh(const std::vector<SdfGrid>& grids, double sigmaD) {
  if (!(sigmaD > 0.0)) {
    throw DimensionError("extractMesh: sigmaD must be positive");
  }
  TriangleMesh mesh;
  if (grids.empty()) {
    return mesh;
  }
  const int r = grids.front().resolution;
  const double step = grids.front().step;
  const Vec3 origin = grids.front().origin;
  for (const SdfGrid& g : grids) {
    if (g.resolution != r || g.step != step) {
      throw DimensionError("extractMesh: grids with mixed resolution");
    }
  }

  std::vector<const SdfGrid*> sorted;
  sorted.reserve(grids.size());
  for (const SdfGrid& g : grids) {
    sorted.push_back(&g);
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const SdfGrid* a, const SdfGrid* b) { return a->voxel < b->voxel; });

  // Average the shared face/edge/corner samples so both sides of a voxel
  // boundary mesh against identical values.
  struct Accum {
    double mu = 0.0;
    double sigma = 0.0;
    int count = 0;
  };
  std::unordered_map<FineKey, Accum, FineKeyHash> accum;
  accum.reserve(sorted.size() * r * r * r);
  for (const SdfGrid* g : sorted) {
    const std::int64_t bx = static_cast<std::int64_t>(g->voxel.x) * (r - 1);
    const std::int64_t by = static_cast<std::int64_t>(g->voxel.y) * (r - 1);
    const std::int64_t bz = static_cast<std::int64_t>(g->voxel.z) * (r - 1);
    for (int k = 0; k < r; ++k) {
      for (int j = 0; j < r; ++j) {
        for (int i = 0; i < r; ++i) {
          const SdfPrediction& s = g->samples[i + r * (j + r * k)];
          Accum& a = accum[FineKey{bx + i, by + j, bz + k}];
          a.mu += s.mean;
          a.sigma += s.stddev;
          ++a.count;
        }
      }
    }
  }
  std::unordered_map<FineKey, SampleValue, FineKeyHash> values;
  values.reserve(accum.size());
  for (const auto& [key, a] : accum) {
    values.emplace(key, SampleValue{a.mu / a.count, a.sigma / a.count});
  }

  const auto position = [&](const FineKey& k) -> Vec3 {
    return origin + step * Vec3(static_cast<double>(k.x), static_cast<double>(k.y),
                                static_cast<double>(k.z));
  };

  std::unordered_map<EdgeKey, std::uint32_t, EdgeKeyHash> edgeVertex;
  const auto vertexOnEdge = [&](const FineKey& a, const FineKey& b,
                                std::uint8_t axis) -> std::uint32_t {
    const EdgeKey key{a, axis};
    auto it = edgeVertex.find(key);
    if (it != edgeVertex.end()) {
      return it->second;
    }
    const double va = values.at(a).mu;
    const double vb = values.at(b).mu;
    double t = 0.5;
    if (std::abs(vb - va) > 1e-300) {
      t = va / (va - vb);
    }
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 pa = position(a);
    const Vec3 pb = position(b);
    const std::uint32_t index = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    edgeVertex.emplace(key, index);
    return index;
  };

  for (const SdfGrid* g : sorted) {
    const std::int64_t bx = static_cast<std::int64_t>(g->voxel.x) * (r - 1);
    const std::int64_t by = static_cast<std::int64_t>(g->voxel.y) * (r - 1);
    const std::int64_t bz = static_cast<std::int64_t>(g->voxel.z) * (r - 1);
    for (int ck = 0; ck + 1 < r; ++ck) {
      for (int cj = 0; cj + 1 < r; ++cj) {
        for (int ci = 0; ci + 1 < r; ++ci) {
          FineKey corner[8];
          double mu[8];
          bool observed = true;
          for (int c = 0; c < 8; ++c) {
            corner[c] = FineKey{bx + ci + kCornerOffset[c][0], by + cj + kCornerOffset[c][1],
                                bz + ck + kCornerOffset[c][2]};
            const SampleValue& v = values.at(corner[c]);
            mu[c] = v.mu;
            if (v.sigma > sigmaD) {
              observed = false;
              break;
            }
          }
          if (!observed) {
            continue;
          }
          int cubeIndex = 0;
          for (int c = 0; c < 8; ++c) {
            if (mu[c] < 0.0) {
              cubeIndex |= 1 << c;
            }
          }
          if (detail::kEdgeTable[cubeIndex] == 0) {
            continue;
          }
          std::uint32_t edgeVerts[12];
          for (int e = 0; e < 12; ++e) {
            if ((detail::kEdgeTable[cubeIndex] & (1 << e)) == 0) {
              continue;
            }
            int a = kEdgeCorners[e][0];
            int b = kEdgeCorners[e][1];
            const std::uint8_t axis = kEdgeAxis[e];
            // Canonical direction: interpolate from the lower endpoint.
            if (kCornerOffset[a][axis] > kCornerOffset[b][axis]) {
              std::swap(a, b);
            }
            edgeVerts[e] = vertexOnEdge(corner[a], corner[b], axis);
          }
          const int* tri = detail::kTriTable[cubeIndex];
          for (int e = 0; tri[e] != -1; e += 3) {
            const std::uint32_t v0 = edgeVerts[tri[e]];
            const std::uint32_t v1 = edgeVerts[tri[e + 1]];
            const std::uint32_t v2 = edgeVerts[tri[e + 2]];
            if (v0 == v1 || v1 == v2 || v0 == v2) {
              continue;  // collapsed by welding
            }
            // Table order faces the negative (inside) region with this
            // corner layout; swap so normals point along increasing mu.
            mesh.triangles.push_back({v0, v2, v1});
          }
        }
      }
    }
  }
  return mesh;
}

TriangleMesh extractMeshFromMap(const ImplicitMap& map, const Codec& codec, int resolution,
                                double sigmaD) {
  return extractMesh(sampleSdf(map, codec, resolution), sigmaD);
}

}  // namespace nimap
