#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nimap/codec.hpp"
#include "nimap/map.hpp"

namespace nimap {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

/// Dense (mu, sigma) sample cube of one voxel: resolution samples per axis,
/// spanning the voxel cube inclusive of its faces so neighboring voxels
/// share the face lattice. Sample (i,j,k) (index i + r*j + r*r*k) sits at
/// origin + step * (voxel * (resolution-1) + (i,j,k)); one global formula,
/// so shared face samples land on bit-identical positions.
struct SdfGrid {
  VoxelIndex voxel;
  int resolution = 0;
  Vec3 origin = Vec3::Zero();  // map origin
  double step = 0.0;           // voxelSize / (resolution - 1)
  std::vector<SdfPrediction> samples;  // resolution^3

  Vec3 samplePosition(int i, int j, int k) const {
    return origin + step * Vec3(static_cast<double>(voxel.x) * (resolution - 1) + i,
                                static_cast<double>(voxel.y) * (resolution - 1) + j,
                                static_cast<double>(voxel.z) * (resolution - 1) + k);
  }
};

inline constexpr double kDefaultSigmaThreshold = 0.06;  // meters
inline constexpr int kDefaultMeshResolution = 4;

/// Decodes every voxel of the map on its resolution^3 lattice.
/// Grids come back in sorted voxel-index order.
std::vector<SdfGrid> sampleSdf(const ImplicitMap& map, const Codec& codec,
                               int resolution = kDefaultMeshResolution);

/// Marching cubes over the zero level of mu. Samples with sigma above
/// sigmaD count as unobserved and suppress the cells touching them.
/// Face samples shared by adjacent voxels are averaged before meshing, so
/// the surface is crack-free; shared edge vertices are welded.
TriangleMesh extractMesh(const std::vector<SdfGrid>& grids,
                         double sigmaD = kDefaultSigmaThreshold);

/// sampleSdf + extractMesh.
TriangleMesh extractMeshFromMap(const ImplicitMap& map, const Codec& codec,
                                int resolution = kDefaultMeshResolution,
                                double sigmaD = kDefaultSigmaThreshold);

}  // namespace nimap
