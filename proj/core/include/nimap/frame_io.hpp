#pragma once

#include <filesystem>
#include <iosfwd>

#include "nimap/geometry.hpp"

namespace nimap {

struct FrameReadOptions {
  int normalK = 16;                  // neighbors for plane-fit normals
  Vec3 viewpoint = Vec3::Zero();     // normals are oriented toward this point
};

/// Reads a point cloud frame. Supported formats:
///  - PLY, ascii or binary_little_endian, vertex x/y/z and optional
///    nx/ny/nz properties;
///  - whitespace text with "x y z" or "x y z nx ny nz" per line
///    ('#' comments allowed).
/// When normals are absent they are estimated by k-NN plane fitting and
/// oriented toward the viewpoint. Parse problems throw FormatError with
/// the offending line or offset.
PointCloud readFrame(const std::filesystem::path& path, const FrameReadOptions& options = {});

PointCloud readXyzText(std::istream& in, const FrameReadOptions& options);
PointCloud readPly(std::istream& in, const FrameReadOptions& options);

/// k-NN PCA plane-fit normals, oriented toward the viewpoint.
void estimateNormals(PointCloud& cloud, int k, const Vec3& viewpoint);

/// "x y z nx ny nz" lines; the inverse of readXyzText.
void writeXyzText(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace nimap
