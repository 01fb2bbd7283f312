#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "nimap/grid.hpp"
#include "nimap/vnn.hpp"

namespace nimap {

/// One latent voxel: center, feature and accumulated observation mass.
/// weight counts own-cube points per contributing frame; interpolation
/// makes it fractional.
struct PLIVox {
  Vec3 center = Vec3::Zero();
  Feature feature;  // 2l x 3
  double weight = 0.0;
};

// Voxels whose remaining weight falls below this after removal are dropped;
// interpolated weights never cancel exactly in floating point.
inline constexpr double kWeightUnderflowTol = 1e-6;

/// Sparse integer-indexed grid of PLIVox entries.
class ImplicitMap {
 public:
  using Storage = std::unordered_map<VoxelIndex, PLIVox, VoxelIndexHash>;

  ImplicitMap() = default;
  explicit ImplicitMap(const GridSpec& grid) : grid_(grid) {}

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }
  Eigen::Index featureRows() const { return featureRows_; }

  const PLIVox* find(const VoxelIndex& idx) const;
  const Storage& voxels() const { return voxels_; }

  /// Inserts or overwrites; center is derived from the grid, weight must be
  /// positive and the feature finite with a uniform row count map-wide.
  void insert(const VoxelIndex& idx, Feature feature, double weight);
  void erase(const VoxelIndex& idx);
  void clear();

  /// Indices in lexicographic (x, y, z) order; the deterministic iteration
  /// order used for serialization and meshing.
  std::vector<VoxelIndex> sortedIndices() const;

 private:
  GridSpec grid_;
  Eigen::Index featureRows_ = 0;
  Storage voxels_;
};

/// Weighted-mean fusion of `local` into `global` (voxel-to-voxel):
/// F <- (F w + F_k w_k) / (w + w_k), w <- w + w_k. Voxels present only in
/// `local` are inserted verbatim. Grids must match exactly.
void fuse(ImplicitMap& global, const ImplicitMap& local);

/// Inverse of fuse: F <- (F w - F_k w_k) / (w - w_k), w <- w - w_k.
/// A voxel whose weight falls below kWeightUnderflowTol is deleted.
/// Removing from a missing voxel, or more weight than is present, throws
/// ConsistencyError.
void remove(ImplicitMap& global, const ImplicitMap& local);

struct MapStats {
  std::size_t voxelCount = 0;
  double totalWeight = 0.0;
  Vec3 bboxMin = Vec3::Zero();  // over voxel cube extents
  Vec3 bboxMax = Vec3::Zero();
  std::size_t fileSizeBytes = 0;
};
MapStats mapStats(const ImplicitMap& map);

/// Per-voxel sample bucket: `gathered` holds every sample inside the
/// 2x-voxel-length cube around the center (the encoding support);
/// `ownCount` counts samples inside the voxel's own 1x cube.
struct VoxelSamples {
  std::vector<PointSample> gathered;
  int ownCount = 0;
};
using Voxelization = std::unordered_map<VoxelIndex, VoxelSamples, VoxelIndexHash>;

/// Buckets a cloud onto the grid. Only voxels with ownCount >= minPoints
/// are emitted. Sample order within a bucket follows input order.
Voxelization voxelize(std::span<const PointSample> points, const GridSpec& grid, int minPoints);

/// Feature-translation Jacobian of one voxel, stored column-wise:
/// cols[p] = d phi_e / d t_p, each 2l x 3, estimated with step deltaT.
struct JacobianBlock {
  std::array<Feature, 3> cols;
  double deltaT = 0.0;

  Feature apply(const Vec3& t) const { return cols[0] * t.x() + cols[1] * t.y() + cols[2] * t.z(); }
};

/// A frame's encoded local map, kept in its original (sensor) coordinates
/// together with the per-voxel Jacobians, so the frame can be re-posed
/// later without touching the raw points. fusedPose records the pose under
/// which the frame currently sits in the global map.
struct FrameLocalMap {
  std::int64_t frameId = 0;
  SE3Pose fusedPose;
  ImplicitMap map;
  std::unordered_map<VoxelIndex, JacobianBlock, VoxelIndexHash> jacobians;
};

// --- map file format (little-endian) -----------------------------------
// magic "NIMP" | u32 version | f64 voxelSize | f64[3] origin
// | u32 featureRows | u64 count
// then per voxel, sorted by index: i32[3] index | f32 weight
// | f32[featureRows*3] feature, row-major.
void serializeMap(const ImplicitMap& map, std::ostream& out);
ImplicitMap deserializeMap(std::istream& in);
void saveMap(const ImplicitMap& map, const std::filesystem::path& path);
ImplicitMap loadMap(const std::filesystem::path& path);

}  // namespace nimap
