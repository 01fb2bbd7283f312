#pragma once

#include <filesystem>
#include <iosfwd>

#include "nimap/mesh.hpp"

namespace nimap {

void writePlyAscii(const TriangleMesh& mesh, std::ostream& out);
void writePlyAscii(const TriangleMesh& mesh, const std::filesystem::path& path);

void writeObj(const TriangleMesh& mesh, std::ostream& out);
void writeObj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Picks the writer from the extension (.ply / .obj).
void writeMesh(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Reads vertices and (optional) triangle faces from an ascii or
/// binary-little-endian PLY. A file without faces yields an empty
/// triangle list. Polygons with more than three vertices are fanned.
TriangleMesh readMeshPly(const std::filesystem::path& path);

}  // namespace nimap
