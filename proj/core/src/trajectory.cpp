#include "nimap/trajectory.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nimap/errors.hpp"

namespace nimap {

const SE3Pose& PoseTable::pose(std::size_t frameId) const {
  if (frameId >= entries.size()) {
    throw ConsistencyError("PoseTable: no pose for frame " + std::to_string(frameId));
  }
  return entries[frameId].pose;
}

void PoseTable::setPose(std::size_t frameId, const SE3Pose& pose) {
  if (frameId >= entries.size()) {
    throw ConsistencyError("PoseTable: no pose for frame " + std::to_string(frameId));
  }
  validatePose(pose);
  entries[frameId].pose = pose;
  entries[frameId].dirty = true;
}

std::vector<std::size_t> PoseTable::dirtyFrames() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].dirty) {
      out.push_back(i);
    }
  }
  return out;
}

void PoseTable::clearDirty(std::size_t frameId) {
  if (frameId < entries.size()) {
    entries[frameId].dirty = false;
  }
}

PoseTable readTrajectory(std::istream& in) {
  PoseTable table;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream ls(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts)) {
      continue;  // blank line
    }
    if (!(ls >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw FormatError("trajectory: malformed line " + std::to_string(lineNo));
    }
    double extra;
    if (ls >> extra) {
      throw FormatError("trajectory: trailing values at line " + std::to_string(lineNo));
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    const double norm = q.norm();
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      throw FormatError("trajectory: degenerate quaternion at line " + std::to_string(lineNo));
    }
    if (std::abs(norm - 1.0) > 1e-3) {
      std::cerr << "warning: trajectory line " << lineNo << ": quaternion norm " << norm
                << ", normalizing\n";
    }
    PoseEntry entry;
    entry.timestamp = ts;
    entry.pose = poseFromQuaternion(q, Vec3(tx, ty, tz));
    table.entries.push_back(entry);
  }
  if (table.entries.empty()) {
    throw FormatError("trajectory: no poses");
  }
  return table;
}

PoseTable readTrajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  return readTrajectory(in);
}

void writeTrajectory(const PoseTable& table, std::ostream& out) {
  out.precision(17);
  for (const PoseEntry& e : table.entries) {
    const Eigen::Quaterniond q(e.pose.rotation);
    out << e.timestamp << ' ' << e.pose.translation.x() << ' ' << e.pose.translation.y() << ' '
        << e.pose.translation.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w()
        << '\n';
  }
  if (!out) {
    throw IoError("writeTrajectory: write failed");
  }
}

void writeTrajectory(const PoseTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  writeTrajectory(table, out);
}

}  // namespace nimap
