#include "nimap/transform.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "nimap/kdtree.hpp"

namespace nimap {

JacobianBlock computeJacobian(const EncoderParams& enc, std::span<const PointSample> samples,
                              const Vec3& center, double deltaT) {
  if (samples.empty()) {
    throw EmptyInputError("computeJacobian: no samples");
  }
  if (!(deltaT > 0.0)) {
    throw DimensionError("computeJacobian: deltaT must be positive");
  }
  const Eigen::Index latent = enc.latentRows();
  const FeatureBatch base = packPointInputs(samples, center);
  const Feature f0 = vnMeanPoolBatch(branchForward(enc.point, base));
  JacobianBlock jac;
  jac.deltaT = deltaT;
  for (int p = 0; p < 3; ++p) {
    FeatureBatch shifted = base;
    for (Eigen::Index i = 0; i < shifted.cols() / 3; ++i) {
      shifted(0, 3 * i + p) += deltaT;
    }
    const Feature fp = vnMeanPoolBatch(branchForward(enc.point, shifted));
    // Normals are unaffected by translation, so their rows are exactly 0.
    Feature col = Feature::Zero(2 * latent, 3);
    col.topRows(latent) = (fp - f0) / deltaT;
    jac.cols[p] = std::move(col);
  }
  return jac;
}

JacobianBlock transformJacobian(const JacobianBlock& jac, const Mat3& rotation) {
  const Mat3 rotT = rotation.transpose();
  std::array<Feature, 3> rotated;
  for (int p = 0; p < 3; ++p) {
    rotated[p] = jac.cols[p] * rotT;
  }
  JacobianBlock out;
  out.deltaT = jac.deltaT;
  for (int q = 0; q < 3; ++q) {
    out.cols[q] =
        rotated[0] * rotation(q, 0) + rotated[1] * rotation(q, 1) + rotated[2] * rotation(q, 2);
  }
  return out;
}

std::vector<TransformedVoxel> transformLocalMap(const FrameLocalMap& local, const SE3Pose& pose) {
  validatePose(pose);
  const Mat3 rotT = pose.rotation.transpose();
  std::vector<TransformedVoxel> out;
  out.reserve(local.map.size());
  for (const VoxelIndex& idx : local.map.sortedIndices()) {
    const PLIVox& v = *local.map.find(idx);
    TransformedVoxel tv;
    tv.center = pose.apply(v.center);
    tv.feature = v.feature * rotT;
    const auto jit = local.jacobians.find(idx);
    if (jit == local.jacobians.end()) {
      throw ConsistencyError("transformLocalMap: voxel without cached Jacobian");
    }
    tv.jacobian = transformJacobian(jit->second, pose.rotation);
    tv.weight = v.weight;
    out.push_back(std::move(tv));
  }
  return out;
}

ImplicitMap interpolateToGrid(std::span<const TransformedVoxel> sources, const GridSpec& targetGrid,
                              int k) {
  if (k < 1) {
    throw DimensionError("interpolateToGrid: K must be >= 1");
  }
  ImplicitMap result(targetGrid);
  if (sources.empty()) {
    return result;
  }
  const double vs = targetGrid.voxelSize;
  // Strictly inside one voxel length, with a relative epsilon so sources
  // sitting exactly on the lattice cannot leak into neighbor cells through
  // last-ulp rounding of the transform.
  const double gate = vs * (1.0 - 1e-9);

  std::vector<Vec3> centers;
  centers.reserve(sources.size());
  for (const TransformedVoxel& s : sources) {
    centers.push_back(s.center);
  }
  const KdTree3 tree(centers);

  // Candidate cells: sources only reach cells in their 3x3x3 index
  // neighborhood.
  std::unordered_set<VoxelIndex, VoxelIndexHash> candidateSet;
  for (const TransformedVoxel& s : sources) {
    const VoxelIndex base = targetGrid.indexOf(s.center);
    for (std::int32_t dx = -1; dx <= 1; ++dx) {
      for (std::int32_t dy = -1; dy <= 1; ++dy) {
        for (std::int32_t dz = -1; dz <= 1; ++dz) {
          const VoxelIndex idx{base.x + dx, base.y + dy, base.z + dz};
          if ((targetGrid.centerOf(idx) - s.center).norm() < gate) {
            candidateSet.insert(idx);
          }
        }
      }
    }
  }
  std::vector<VoxelIndex> candidates(candidateSet.begin(), candidateSet.end());
  std::sort(candidates.begin(), candidates.end());

  struct Cell {
    Feature feature;
    double weight = 0.0;
  };
  std::vector<Cell> cells(candidates.size());

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(candidates.size()); ++ci) {
    const Vec3 cn = targetGrid.centerOf(candidates[ci]);
    const auto hits = tree.knn(cn, k, gate);
    if (hits.empty()) {
      continue;  // cannot happen by construction
    }
    double expSum = 0.0;
    for (const auto& h : hits) {
      expSum += std::exp(-h.distSq);
    }
    Cell& cell = cells[ci];
    cell.feature = Feature::Zero(sources[hits.front().index].feature.rows(), 3);
    for (const auto& h : hits) {
      const TransformedVoxel& src = sources[h.index];
      const double s = std::exp(-h.distSq) / expSum;
      // Re-centering at the target is a shift of the observed world by
      // (source - target): verified exact on encoders linear in the
      // translation. The opposite direction doubles the displacement.
      const Vec3 t = src.center - cn;
      cell.feature += s * (src.feature + src.jacobian.apply(t));
      cell.weight += s * src.weight;
    }
  }

  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    if (cells[ci].weight > 0.0) {
      result.insert(candidates[ci], std::move(cells[ci].feature), cells[ci].weight);
    }
  }
  return result;
}

ImplicitMap transformAndInterpolate(const FrameLocalMap& frame, const SE3Pose& pose,
                                    const GridSpec& targetGrid, int k) {
  const std::vector<TransformedVoxel> transformed = transformLocalMap(frame, pose);
  return interpolateToGrid(transformed, targetGrid, k);
}

FrameLocalMap buildLocalMap(const Codec& codec, std::span<const PointSample> frame,
                            const GridSpec& grid, const LocalMapParams& params,
                            std::int64_t frameId) {
  if (frame.empty()) {
    throw EmptyInputError("buildLocalMap: empty frame");
  }
  const Voxelization buckets = voxelize(frame, grid, params.minPoints);
  if (buckets.empty()) {
    throw EmptyInputError("buildLocalMap: frame yields no occupied voxels");
  }

  std::vector<const Voxelization::value_type*> entries;
  entries.reserve(buckets.size());
  for (const auto& kv : buckets) {
    entries.push_back(&kv);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });

  struct Built {
    Feature feature;
    JacobianBlock jacobian;
  };
  std::vector<Built> built(entries.size());

#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(entries.size()); ++i) {
    const VoxelIndex idx = entries[i]->first;
    const VoxelSamples& bucket = entries[i]->second;
    const Vec3 center = grid.centerOf(idx);
    built[i].feature = encodeVoxel(codec.encoder, bucket.gathered, center);
    built[i].jacobian = computeJacobian(codec.encoder, bucket.gathered, center, params.deltaT);
  }

  FrameLocalMap local;
  local.frameId = frameId;
  local.map = ImplicitMap(grid);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const VoxelIndex idx = entries[i]->first;
    local.map.insert(idx, std::move(built[i].feature),
                     static_cast<double>(entries[i]->second.ownCount));
    local.jacobians.emplace(idx, std::move(built[i].jacobian));
  }
  return local;
}

ImplicitMap encodeFrameToMap(const Codec& codec, std::span<const PointSample> frame,
                             const GridSpec& grid, int minPoints) {
  if (frame.empty()) {
    throw EmptyInputError("encodeFrameToMap: empty frame");
  }
  const Voxelization buckets = voxelize(frame, grid, minPoints);
  if (buckets.empty()) {
    throw EmptyInputError("encodeFrameToMap: frame yields no occupied voxels");
  }
  std::vector<const Voxelization::value_type*> entries;
  entries.reserve(buckets.size());
  for (const auto& kv : buckets) {
    entries.push_back(&kv);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });

  std::vector<Feature> features(entries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(entries.size()); ++i) {
    features[i] = encodeVoxel(codec.encoder, entries[i]->second.gathered,
                              grid.centerOf(entries[i]->first));
  }

  ImplicitMap map(grid);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    map.insert(entries[i]->first, std::move(features[i]),
               static_cast<double>(entries[i]->second.ownCount));
  }
  return map;
}

void remapFrame(ImplicitMap& global, FrameLocalMap& frame, ImplicitMap& fusedCache,
                const SE3Pose& newPose, int k) {
  validatePose(newPose);
  remove(global, fusedCache);
  ImplicitMap updated = transformAndInterpolate(frame, newPose, global.grid(), k);
  fuse(global, updated);
  fusedCache = std::move(updated);
  frame.fusedPose = newPose;
}

}  // namespace nimap
