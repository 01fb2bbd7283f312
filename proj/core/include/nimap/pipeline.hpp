#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "nimap/frame_io.hpp"
#include "nimap/mesh.hpp"
#include "nimap/metrics.hpp"
#include "nimap/trajectory.hpp"
#include "nimap/transform.hpp"

namespace nimap {

/// Run configuration: plain-text "key = value" file plus programmatic or
/// command-line overrides. Unknown keys are rejected.
struct PipelineConfig {
  std::filesystem::path frames;      // directory of frames or a list file
  std::filesystem::path trajectory;  // TUM pose file, line i = frame i
  std::filesystem::path events;      // optional pose-update events
  std::filesystem::path codec;       // trained codec file
  std::filesystem::path workdir;     // outputs and per-frame caches

  double voxelSize = 0.1;
  int k = 8;
  double sigmaD = 0.06;
  int resolution = 4;
  double deltaT = 0.01;
  int minPoints = 8;
  std::uint64_t seed = 0;
  int meshSamples = kDefaultMetricSamples;
  int normalK = 16;
};

PipelineConfig loadConfig(const std::filesystem::path& path);
/// "key=value" override, same keys as the config file.
void applyOverride(PipelineConfig& config, const std::string& keyValue);

/// Frame files from a directory (sorted by name) or a list file
/// (one path per line, relative to the list).
std::vector<std::filesystem::path> listFrameFiles(const std::filesystem::path& framesPath);

/// A pose correction: after frame `applyAfter` is fused, frame `frameId`
/// gets `pose` and is remapped. Text format, one per line:
///   applyAfter frameId tx ty tz qx qy qz qw
struct PoseEvent {
  std::int64_t applyAfter = 0;
  std::int64_t frameId = 0;
  SE3Pose pose;
};
std::vector<PoseEvent> readEvents(const std::filesystem::path& path);

struct FramePacket {
  std::int64_t frameId = 0;
  double timestamp = 0.0;
  PointCloud cloud;
  SE3Pose pose;
};

/// Per-frame retained state: the encoded local map (with Jacobians) and
/// the interpolated map actually fused into the global map, kept so a
/// later removal is bit-consistent.
struct FrameCache {
  FrameLocalMap local;
  ImplicitMap fused;
};

// Frame cache file: magic "NIFC" | u32 version | i64 frameId | f64 deltaT
// | f64[9] R row-major | f64[3] t | local map block | u64 jacobianCount
// | per voxel sorted: i32[3] index, f32[rows*3*3] (columns x,y,z row-major)
// | fused map block.
void saveFrameCache(const FrameCache& cache, const std::filesystem::path& path);
FrameCache loadFrameCache(const std::filesystem::path& path);

struct SessionParams {
  int k = kDefaultInterpolationK;
  double deltaT = kDefaultJacobianStep;
  int minPoints = 8;
};

/// Owns the global map and the per-frame caches. Frames are encoded once;
/// pose updates are served from the caches alone, so raw points are never
/// read again. Loading a saved session supports remapping without a codec.
class MappingSession {
 public:
  MappingSession(GridSpec grid, SessionParams params);
  MappingSession(Codec codec, GridSpec grid, SessionParams params);

  const ImplicitMap& map() const { return global_; }
  const GridSpec& grid() const { return global_.grid(); }
  const SessionParams& params() const { return params_; }
  bool hasCodec() const { return codec_.has_value(); }
  const Codec& codec() const;

  void integrateFrame(const FramePacket& packet);
  /// Remove + re-transform + interpolate + fuse under the new pose.
  void updatePose(std::int64_t frameId, const SE3Pose& newPose);

  bool hasFrame(std::int64_t frameId) const { return frames_.count(frameId) > 0; }
  std::vector<std::int64_t> frameIds() const;
  const FrameCache& frame(std::int64_t frameId) const;

  void save(const std::filesystem::path& workdir) const;
  static MappingSession load(const std::filesystem::path& workdir);

 private:
  std::optional<Codec> codec_;
  SessionParams params_;
  ImplicitMap global_;
  std::map<std::int64_t, FrameCache> frames_;
};

struct SequenceReport {
  std::size_t frames = 0;
  std::size_t remaps = 0;
  std::size_t voxels = 0;
  double totalWeight = 0.0;
  double integrateSeconds = 0.0;  // encode + transform + interpolate + fuse
  double remapSeconds = 0.0;

  nlohmann::json toJson() const;
};

struct SequenceResult {
  MappingSession session;
  SequenceReport report;
};

/// Full run: read frames + trajectory, integrate in order, fire events,
/// remap dirty frames; writes the final map, caches and a JSON report
/// into config.workdir (unless it is empty).
SequenceResult runSequence(const PipelineConfig& config);

/// Loads the session in `workdir`, applies every event's pose, saves.
SequenceReport applyEventsToSession(const std::filesystem::path& workdir,
                                    const std::vector<PoseEvent>& events);

struct TwoPathRow {
  std::int64_t frame = 0;
  double accuracy = 0.0;      // latent-transformed mesh vs direct mesh
  double completeness = 0.0;  // direct mesh vs latent-transformed mesh
  std::size_t voxelsDirect = 0;
  std::size_t voxelsLatent = 0;
  double featureMaxError = 0.0;  // over voxels shared by both maps
};

struct TwoPathResult {
  std::vector<TwoPathRow> rows;

  nlohmann::json toJson() const;
};

/// Per frame, builds the map both ways - encode the transformed points
/// versus transform the encoded latent map - extracts both surfaces and
/// measures accuracy / completeness between them.
TwoPathResult runTwoPath(const PipelineConfig& config);
void writeTwoPathCsv(const TwoPathResult& result, const std::filesystem::path& path);

/// Surface comparison record (accuracy / completeness / chamfer, meters).
nlohmann::json evalSurfaceRecord(std::span<const Vec3> recon, std::span<const Vec3> reference);

}  // namespace nimap
