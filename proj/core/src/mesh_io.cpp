#include "nimap/mesh_io.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "nimap/detail/binary.hpp"

namespace nimap {

namespace {

std::ofstream openOut(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  return out;
}

}  // namespace

void writePlyAscii(const TriangleMesh& mesh, std::ostream& out) {
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  out.precision(9);
  for (const Vec3& v : mesh.vertices) {
    out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
  if (!out) {
    throw IoError("writePlyAscii: write failed");
  }
}

void writePlyAscii(const TriangleMesh& mesh, const std::filesystem::path& path) {
  auto out = openOut(path);
  writePlyAscii(mesh, out);
}

void writeObj(const TriangleMesh& mesh, std::ostream& out) {
  out.precision(9);
  for (const Vec3& v : mesh.vertices) {
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) {
    throw IoError("writeObj: write failed");
  }
}

void writeObj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  auto out = openOut(path);
  writeObj(mesh, out);
}

void writeMesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") {
    writePlyAscii(mesh, path);
  } else if (ext == ".obj") {
    writeObj(mesh, path);
  } else {
    throw IoError("writeMesh: unsupported extension '" + ext + "' (use .ply or .obj)");
  }
}

namespace {

struct MeshPlyProperty {
  std::string name;
  std::string type;
  bool isList = false;
  std::string countType;
};

struct MeshPlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<MeshPlyProperty> properties;
};

double readPlyScalar(std::istream& in, const std::string& type) {
  if (type == "char" || type == "int8") return detail::readRaw<std::int8_t>(in);
  if (type == "uchar" || type == "uint8") return detail::readRaw<std::uint8_t>(in);
  if (type == "short" || type == "int16") return detail::readRaw<std::int16_t>(in);
  if (type == "ushort" || type == "uint16") return detail::readRaw<std::uint16_t>(in);
  if (type == "int" || type == "int32") return detail::readRaw<std::int32_t>(in);
  if (type == "uint" || type == "uint32") return detail::readRaw<std::uint32_t>(in);
  if (type == "float" || type == "float32") return detail::readRaw<float>(in);
  if (type == "double" || type == "float64") return detail::readRaw<double>(in);
  throw FormatError("PLY: unknown type '" + type + "'");
}

std::size_t plyScalarSize(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "double" || type == "float64") return 8;
  return 4;
}

}  // namespace

TriangleMesh readMeshPly(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r")) {
    throw FormatError("PLY: missing 'ply' signature");
  }
  bool binary = false;
  std::vector<MeshPlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
      continue;
    }
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw FormatError("PLY: unsupported format '" + fmt + "'");
      }
    } else if (keyword == "element") {
      MeshPlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (keyword == "property") {
      MeshPlyProperty p;
      std::string first;
      ls >> first;
      if (first == "list") {
        p.isList = true;
        ls >> p.countType >> p.type >> p.name;
      } else {
        p.type = first;
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (keyword == "end_header") {
      break;
    } else {
      throw FormatError("PLY: unexpected header keyword '" + keyword + "'");
    }
  }

  TriangleMesh mesh;
  for (const MeshPlyElement& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t p = 0; p < e.properties.size(); ++p) {
        if (e.properties[p].name == "x") ix = static_cast<int>(p);
        if (e.properties[p].name == "y") iy = static_cast<int>(p);
        if (e.properties[p].name == "z") iz = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) {
        throw FormatError("PLY: vertex element lacks x/y/z");
      }
      mesh.vertices.reserve(e.count);
      std::vector<double> record(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        if (binary) {
          for (std::size_t p = 0; p < e.properties.size(); ++p) {
            record[p] = readPlyScalar(in, e.properties[p].type);
          }
        } else {
          if (!std::getline(in, line)) {
            throw FormatError("PLY: truncated vertex " + std::to_string(i));
          }
          std::istringstream ls(line);
          for (std::size_t p = 0; p < e.properties.size(); ++p) {
            if (!(ls >> record[p])) {
              throw FormatError("PLY: malformed vertex " + std::to_string(i));
            }
          }
        }
        mesh.vertices.emplace_back(record[ix], record[iy], record[iz]);
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        std::vector<std::uint32_t> face;
        if (binary) {
          const MeshPlyProperty& p = e.properties.front();
          if (!p.isList) {
            throw FormatError("PLY: face element without list property");
          }
          const auto n = static_cast<std::size_t>(readPlyScalar(in, p.countType));
          for (std::size_t v = 0; v < n; ++v) {
            face.push_back(static_cast<std::uint32_t>(readPlyScalar(in, p.type)));
          }
        } else {
          if (!std::getline(in, line)) {
            throw FormatError("PLY: truncated face " + std::to_string(i));
          }
          std::istringstream ls(line);
          std::size_t n = 0;
          if (!(ls >> n)) {
            throw FormatError("PLY: malformed face " + std::to_string(i));
          }
          std::uint32_t v;
          while (ls >> v) {
            face.push_back(v);
          }
          if (face.size() != n) {
            throw FormatError("PLY: face " + std::to_string(i) + " count mismatch");
          }
        }
        for (std::uint32_t v : face) {
          if (v >= mesh.vertices.size()) {
            throw FormatError("PLY: face index out of range");
          }
        }
        for (std::size_t v = 2; v < face.size(); ++v) {
          mesh.triangles.push_back({face[0], face[v - 1], face[v]});
        }
      }
    } else {
      // Skip unneeded elements.
      if (binary) {
        std::size_t recordSize = 0;
        for (const MeshPlyProperty& p : e.properties) {
          if (p.isList) {
            throw FormatError("PLY: cannot skip binary list element '" + e.name + "'");
          }
          recordSize += plyScalarSize(p.type);
        }
        in.seekg(static_cast<std::streamoff>(recordSize * e.count), std::ios::cur);
      } else {
        for (std::size_t i = 0; i < e.count; ++i) {
          std::getline(in, line);
        }
      }
    }
  }
  if (mesh.vertices.empty()) {
    throw FormatError("PLY: no vertices in " + path.string());
  }
  return mesh;
}

}  // namespace nimap
