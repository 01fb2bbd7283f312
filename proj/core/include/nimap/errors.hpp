#pragma once

#include <stdexcept>
#include <string>

namespace nimap {

// Shape disagreement between a parameter and its input.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// An operation received an empty point/sample/feature collection.
class EmptyInputError : public std::invalid_argument {
 public:
  explicit EmptyInputError(const std::string& what) : std::invalid_argument(what) {}
};

// Two maps do not share a voxel size / origin lattice.
class GridError : public std::runtime_error {
 public:
  explicit GridError(const std::string& what) : std::runtime_error(what) {}
};

// Map algebra invariant violated, e.g. removing more weight than a voxel holds.
// Signals a pose-bookkeeping bug upstream, not bad user input.
class ConsistencyError : public std::runtime_error {
 public:
  explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

// Rotation matrix failed the orthonormality / determinant check.
class PoseError : public std::invalid_argument {
 public:
  explicit PoseError(const std::string& what) : std::invalid_argument(what) {}
};

// Bad magic, version, truncation or malformed content in a serialized stream.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be opened / read / written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Optimization diverged (NaN loss and the like).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nimap
