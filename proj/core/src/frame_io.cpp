#include "nimap/frame_io.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "nimap/detail/binary.hpp"
#include "nimap/kdtree.hpp"

namespace nimap {

namespace {

struct PlyProperty {
  std::string name;
  std::string type;       // scalar type, or item type for lists
  bool isList = false;
  std::string countType;  // list count type
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

std::size_t scalarSize(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
      type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  throw FormatError("PLY: unknown property type '" + type + "'");
}

double readBinaryScalar(std::istream& in, const std::string& type) {
  if (type == "char" || type == "int8") return detail::readRaw<std::int8_t>(in);
  if (type == "uchar" || type == "uint8") return detail::readRaw<std::uint8_t>(in);
  if (type == "short" || type == "int16") return detail::readRaw<std::int16_t>(in);
  if (type == "ushort" || type == "uint16") return detail::readRaw<std::uint16_t>(in);
  if (type == "int" || type == "int32") return detail::readRaw<std::int32_t>(in);
  if (type == "uint" || type == "uint32") return detail::readRaw<std::uint32_t>(in);
  if (type == "float" || type == "float32") return detail::readRaw<float>(in);
  return detail::readRaw<double>(in);
}

void finalizeNormals(PointCloud& cloud, bool hadNormals, const FrameReadOptions& options) {
  if (cloud.empty()) {
    throw FormatError("frame contains no points");
  }
  if (!hadNormals) {
    estimateNormals(cloud, options.normalK, options.viewpoint);
    return;
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double n = cloud[i].normal.norm();
    if (n < 1e-12) {
      throw FormatError("zero-length normal at point " + std::to_string(i));
    }
    cloud[i].normal /= n;
  }
}

}  // namespace

PointCloud readXyzText(std::istream& in, const FrameReadOptions& options) {
  PointCloud cloud;
  std::string line;
  std::size_t lineNo = 0;
  bool sawNormals = false;
  bool sawBare = false;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) {
      vals.push_back(v);
    }
    if (!ls.eof()) {
      throw FormatError("XYZ: non-numeric token at line " + std::to_string(lineNo));
    }
    if (vals.empty()) {
      continue;
    }
    if (vals.size() != 3 && vals.size() != 6) {
      throw FormatError("XYZ: expected 3 or 6 values at line " + std::to_string(lineNo) +
                        ", got " + std::to_string(vals.size()));
    }
    PointSample s;
    s.position = Vec3(vals[0], vals[1], vals[2]);
    if (!s.position.allFinite()) {
      throw FormatError("XYZ: non-finite position at line " + std::to_string(lineNo));
    }
    if (vals.size() == 6) {
      s.normal = Vec3(vals[3], vals[4], vals[5]);
      sawNormals = true;
    } else {
      sawBare = true;
    }
    cloud.push_back(s);
  }
  if (sawNormals && sawBare) {
    throw FormatError("XYZ: mixed lines with and without normals");
  }
  finalizeNormals(cloud, sawNormals, options);
  return cloud;
}

PointCloud readPly(std::istream& in, const FrameReadOptions& options) {
  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r")) {
    throw FormatError("PLY: missing 'ply' signature");
  }
  bool binary = false;
  std::vector<PlyElement> elements;
  bool headerDone = false;
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
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        throw FormatError("PLY: unsupported format '" + fmt + "'");
      }
    } else if (keyword == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (keyword == "property") {
      if (elements.empty()) {
        throw FormatError("PLY: property before any element");
      }
      PlyProperty p;
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
      headerDone = true;
      break;
    } else {
      throw FormatError("PLY: unexpected header keyword '" + keyword + "'");
    }
  }
  if (!headerDone) {
    throw FormatError("PLY: truncated header");
  }

  PointCloud cloud;
  bool hasNormals = false;
  for (const PlyElement& e : elements) {
    const bool isVertex = e.name == "vertex";
    if (!isVertex && !cloud.empty()) {
      break;  // vertices already read; trailing elements are not needed
    }
    if (!isVertex) {
      // Skip a leading element.
      if (!binary) {
        for (std::size_t i = 0; i < e.count; ++i) {
          if (!std::getline(in, line)) {
            throw FormatError("PLY: truncated element '" + e.name + "'");
          }
        }
      } else {
        std::size_t recordSize = 0;
        for (const PlyProperty& p : e.properties) {
          if (p.isList) {
            throw FormatError("PLY: cannot skip binary list element '" + e.name +
                              "' before vertex data");
          }
          recordSize += scalarSize(p.type);
        }
        in.seekg(static_cast<std::streamoff>(recordSize * e.count), std::ios::cur);
        if (!in) {
          throw FormatError("PLY: truncated element '" + e.name + "'");
        }
      }
      continue;
    }

    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
    for (std::size_t p = 0; p < e.properties.size(); ++p) {
      const std::string& n = e.properties[p].name;
      if (n == "x") ix = static_cast<int>(p);
      if (n == "y") iy = static_cast<int>(p);
      if (n == "z") iz = static_cast<int>(p);
      if (n == "nx") inx = static_cast<int>(p);
      if (n == "ny") iny = static_cast<int>(p);
      if (n == "nz") inz = static_cast<int>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) {
      throw FormatError("PLY: vertex element lacks x/y/z properties");
    }
    hasNormals = inx >= 0 && iny >= 0 && inz >= 0;

    cloud.reserve(e.count);
    std::vector<double> record(e.properties.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!binary) {
        if (!std::getline(in, line)) {
          throw FormatError("PLY: truncated vertex " + std::to_string(i));
        }
        std::istringstream ls(line);
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          if (e.properties[p].isList) {
            throw FormatError("PLY: list property on vertex element");
          }
          if (!(ls >> record[p])) {
            throw FormatError("PLY: malformed vertex " + std::to_string(i));
          }
        }
      } else {
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          if (e.properties[p].isList) {
            throw FormatError("PLY: list property on vertex element");
          }
          record[p] = readBinaryScalar(in, e.properties[p].type);
        }
      }
      PointSample s;
      s.position = Vec3(record[ix], record[iy], record[iz]);
      if (hasNormals) {
        s.normal = Vec3(record[inx], record[iny], record[inz]);
      }
      cloud.push_back(s);
    }
  }
  finalizeNormals(cloud, hasNormals, options);
  return cloud;
}

PointCloud readFrame(const std::filesystem::path& path, const FrameReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  const auto ext = path.extension().string();
  if (ext == ".ply") {
    return readPly(in, options);
  }
  return readXyzText(in, options);
}

void estimateNormals(PointCloud& cloud, int k, const Vec3& viewpoint) {
  if (cloud.empty()) {
    return;
  }
  std::vector<Vec3> positions;
  positions.reserve(cloud.size());
  for (const PointSample& s : cloud) {
    positions.push_back(s.position);
  }
  const KdTree3 tree(positions);
  const int neighbors = std::min<int>(k + 1, static_cast<int>(cloud.size()));

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cloud.size()); ++i) {
    const auto hits = tree.knn(cloud[i].position, neighbors);
    Vec3 normal = Vec3::UnitZ();
    if (hits.size() >= 3) {
      Vec3 mean = Vec3::Zero();
      for (const auto& h : hits) {
        mean += positions[h.index];
      }
      mean /= static_cast<double>(hits.size());
      Mat3 cov = Mat3::Zero();
      for (const auto& h : hits) {
        const Vec3 d = positions[h.index] - mean;
        cov += d * d.transpose();
      }
      Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
      normal = eig.eigenvectors().col(0);  // smallest eigenvalue
      if (normal.norm() < 1e-12) {
        normal = Vec3::UnitZ();
      } else {
        normal.normalize();
      }
    }
    if (normal.dot(viewpoint - cloud[i].position) < 0.0) {
      normal = -normal;
    }
    cloud[i].normal = normal;
  }
}

void writeXyzText(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out.precision(17);
  for (const PointSample& s : cloud) {
    out << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z() << ' '
        << s.normal.x() << ' ' << s.normal.y() << ' ' << s.normal.z() << '\n';
  }
  if (!out) {
    throw IoError("writeXyzText: write failed");
  }
}

}  // namespace nimap
