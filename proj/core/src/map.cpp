#include "nimap/map.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "nimap/detail/binary.hpp"

namespace nimap {

namespace {
constexpr char kMapMagic[4] = {'N', 'I', 'M', 'P'};
constexpr std::uint32_t kMapVersion = 1;
constexpr std::uint32_t kMaxFeatureRows = 4096;
}  // namespace

const PLIVox* ImplicitMap::find(const VoxelIndex& idx) const {
  auto it = voxels_.find(idx);
  return it == voxels_.end() ? nullptr : &it->second;
}

void ImplicitMap::insert(const VoxelIndex& idx, Feature feature, double weight) {
  if (!(weight > 0.0)) {
    throw ConsistencyError("ImplicitMap::insert: weight must be positive");
  }
  if (!feature.allFinite()) {
    throw ConsistencyError("ImplicitMap::insert: non-finite feature");
  }
  if (featureRows_ == 0) {
    featureRows_ = feature.rows();
  } else if (feature.rows() != featureRows_) {
    throw DimensionError("ImplicitMap::insert: feature row count differs from map");
  }
  PLIVox& v = voxels_[idx];
  v.center = grid_.centerOf(idx);
  v.feature = std::move(feature);
  v.weight = weight;
}

void ImplicitMap::erase(const VoxelIndex& idx) { voxels_.erase(idx); }

void ImplicitMap::clear() {
  voxels_.clear();
  featureRows_ = 0;
}

std::vector<VoxelIndex> ImplicitMap::sortedIndices() const {
  std::vector<VoxelIndex> idx;
  idx.reserve(voxels_.size());
  for (const auto& [k, v] : voxels_) {
    idx.push_back(k);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

void fuse(ImplicitMap& global, const ImplicitMap& local) {
  if (!global.grid().sameLattice(local.grid())) {
    throw GridError("fuse: maps live on different lattices");
  }
  for (const auto& [idx, lv] : local.voxels()) {
    const PLIVox* gv = global.find(idx);
    if (gv == nullptr) {
      global.insert(idx, lv.feature, lv.weight);
    } else {
      const double w = gv->weight + lv.weight;
      Feature f = (gv->feature * gv->weight + lv.feature * lv.weight) / w;
      global.insert(idx, std::move(f), w);
    }
  }
}

void remove(ImplicitMap& global, const ImplicitMap& local) {
  if (!global.grid().sameLattice(local.grid())) {
    throw GridError("remove: maps live on different lattices");
  }
  for (const auto& [idx, lv] : local.voxels()) {
    const PLIVox* gv = global.find(idx);
    if (gv == nullptr) {
      throw ConsistencyError("remove: voxel missing from global map");
    }
    const double w = gv->weight - lv.weight;
    if (w < -kWeightUnderflowTol) {
      throw ConsistencyError("remove: more weight removed than present (pose bookkeeping bug?)");
    }
    if (w < kWeightUnderflowTol) {
      global.erase(idx);
      continue;
    }
    Feature f = (gv->feature * gv->weight - lv.feature * lv.weight) / w;
    global.insert(idx, std::move(f), w);
  }
}

MapStats mapStats(const ImplicitMap& map) {
  MapStats s;
  s.voxelCount = map.size();
  const double half = 0.5 * map.grid().voxelSize;
  if (!map.empty()) {
    s.bboxMin = Vec3::Constant(std::numeric_limits<double>::infinity());
    s.bboxMax = -s.bboxMin;
  }
  for (const auto& [idx, v] : map.voxels()) {
    s.totalWeight += v.weight;
    s.bboxMin = s.bboxMin.cwiseMin(v.center - Vec3::Constant(half));
    s.bboxMax = s.bboxMax.cwiseMax(v.center + Vec3::Constant(half));
  }
  s.fileSizeBytes = 52 + map.size() * (16 + static_cast<std::size_t>(map.featureRows()) * 12);
  return s;
}

Voxelization voxelize(std::span<const PointSample> points, const GridSpec& grid, int minPoints) {
  Voxelization buckets;
  const double vs = grid.voxelSize;
  for (const PointSample& s : points) {
    const VoxelIndex own = grid.indexOf(s.position);
    // The 2x-length gathering cube of voxel j contains p iff
    // p - center(j) is in [-vs, vs) per axis; that is two candidate index
    // values per axis around the owning cell.
    const Vec3 frac = (s.position - grid.origin) / vs -
                      Vec3(static_cast<double>(own.x), static_cast<double>(own.y),
                           static_cast<double>(own.z));
    std::int32_t lo[3];
    for (int a = 0; a < 3; ++a) {
      const std::int32_t base = (a == 0 ? own.x : a == 1 ? own.y : own.z);
      lo[a] = frac[a] < 0.5 ? base - 1 : base;
    }
    for (std::int32_t dx = 0; dx < 2; ++dx) {
      for (std::int32_t dy = 0; dy < 2; ++dy) {
        for (std::int32_t dz = 0; dz < 2; ++dz) {
          const VoxelIndex idx{lo[0] + dx, lo[1] + dy, lo[2] + dz};
          VoxelSamples& bucket = buckets[idx];
          bucket.gathered.push_back(s);
          if (idx == own) {
            ++bucket.ownCount;
          }
        }
      }
    }
  }
  for (auto it = buckets.begin(); it != buckets.end();) {
    if (it->second.ownCount < minPoints) {
      it = buckets.erase(it);
    } else {
      ++it;
    }
  }
  return buckets;
}

void serializeMap(const ImplicitMap& map, std::ostream& out) {
  using namespace detail;
  writeMagic(out, kMapMagic);
  writeU32(out, kMapVersion);
  writeF64(out, map.grid().voxelSize);
  for (int a = 0; a < 3; ++a) {
    writeF64(out, map.grid().origin[a]);
  }
  writeU32(out, static_cast<std::uint32_t>(map.featureRows()));
  writeU64(out, map.size());
  for (const VoxelIndex& idx : map.sortedIndices()) {
    const PLIVox& v = *map.find(idx);
    writeI32(out, idx.x);
    writeI32(out, idx.y);
    writeI32(out, idx.z);
    writeF32(out, static_cast<float>(v.weight));
    for (Eigen::Index r = 0; r < v.feature.rows(); ++r) {
      for (Eigen::Index c = 0; c < 3; ++c) {
        writeF32(out, static_cast<float>(v.feature(r, c)));
      }
    }
  }
  if (!out) {
    throw IoError("serializeMap: write failed");
  }
}

ImplicitMap deserializeMap(std::istream& in) {
  using namespace detail;
  expectMagic(in, kMapMagic, "map file");
  expectVersion(in, kMapVersion, "map file");
  GridSpec grid;
  grid.voxelSize = readF64(in);
  if (!(grid.voxelSize > 0.0)) {
    throw FormatError("map file: non-positive voxel size");
  }
  for (int a = 0; a < 3; ++a) {
    grid.origin[a] = readF64(in);
  }
  const std::uint32_t rows = readU32(in);
  if (rows > kMaxFeatureRows) {
    throw FormatError("map file: implausible feature row count");
  }
  const std::uint64_t count = readU64(in);
  ImplicitMap map(grid);
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelIndex idx;
    idx.x = readI32(in);
    idx.y = readI32(in);
    idx.z = readI32(in);
    const float w = readF32(in);
    Feature f(rows, 3);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (int c = 0; c < 3; ++c) {
        f(r, c) = readF32(in);
      }
    }
    map.insert(idx, std::move(f), w);
  }
  return map;
}

void saveMap(const ImplicitMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  serializeMap(map, out);
}

ImplicitMap loadMap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  return deserializeMap(in);
}

}  // namespace nimap
