#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "nimap/geometry.hpp"

namespace nimap {

struct PoseEntry {
  double timestamp = 0.0;
  SE3Pose pose;
  bool dirty = false;  // set when a pose update has not been remapped yet
};

/// Frame id -> pose; ids are the (monotone) line positions of the file.
struct PoseTable {
  std::vector<PoseEntry> entries;

  std::size_t size() const { return entries.size(); }
  const SE3Pose& pose(std::size_t frameId) const;
  void setPose(std::size_t frameId, const SE3Pose& pose);  // marks dirty
  std::vector<std::size_t> dirtyFrames() const;
  void clearDirty(std::size_t frameId);
};

/// TUM text trajectory: "timestamp tx ty tz qx qy qz qw" per line,
/// '#' comments. Quaternions off unit length by more than 1e-3 produce a
/// warning on stderr; all are normalized. Malformed lines throw
/// FormatError with the line number.
PoseTable readTrajectory(std::istream& in);
PoseTable readTrajectory(const std::filesystem::path& path);
void writeTrajectory(const PoseTable& table, std::ostream& out);
void writeTrajectory(const PoseTable& table, const std::filesystem::path& path);

}  // namespace nimap
