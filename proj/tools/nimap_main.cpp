// nimap - transformable neural implicit maps.
//
// Subcommands: train, build, remap, mesh, eval, twopath.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "nimap/mesh_io.hpp"
#include "nimap/pipeline.hpp"
#include "nimap/trainer.hpp"
#include "nimap/weights_io.hpp"

namespace {

using namespace nimap;

// Points for surface evaluation: sampled when the file is a mesh with
// faces, its raw points otherwise.
std::vector<Vec3> surfacePoints(const std::filesystem::path& path, int samples,
                                std::uint64_t seed) {
  if (path.extension() == ".ply") {
    const TriangleMesh mesh = readMeshPly(path);
    if (!mesh.empty()) {
      return sampleMeshPoints(mesh, samples, seed);
    }
    return mesh.vertices;
  }
  const PointCloud cloud = readFrame(path);
  std::vector<Vec3> pts;
  pts.reserve(cloud.size());
  for (const PointSample& s : cloud) {
    pts.push_back(s.position);
  }
  return pts;
}

int runCli(int argc, char** argv) {
  CLI::App app{"transformable neural implicit maps"};
  app.require_subcommand(1);

  // --- train -------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a codec on synthetic primitives");
  std::string trainOutput = "codec.nic";
  std::string trainReportPath;
  TrainerConfig trainerConfig;
  train->add_option("--output", trainOutput, "codec output file")->capture_default_str();
  train->add_option("--report", trainReportPath, "write a JSON training report");
  train->add_option("--seed", trainerConfig.seed, "RNG seed")->capture_default_str();
  train->add_option("--iterations", trainerConfig.iterations)->capture_default_str();
  train->add_option("--batch-voxels", trainerConfig.batchVoxels)->capture_default_str();
  train->add_option("--learning-rate", trainerConfig.learningRate)->capture_default_str();
  train->add_option("--voxel-size", trainerConfig.voxelSize)->capture_default_str();
  train->add_option("--samples-per-shape", trainerConfig.samplesPerShape)->capture_default_str();

  // --- shared config options ----------------------------------------------
  PipelineConfig config;
  std::string configPath;
  std::vector<std::string> overrides;
  const auto addConfigOptions = [&](CLI::App* cmd, bool needsCodec) {
    cmd->add_option("--config", configPath, "key=value config file");
    cmd->add_option("--frames", config.frames, "frame directory or list file");
    cmd->add_option("--trajectory", config.trajectory, "TUM trajectory, line i = frame i");
    cmd->add_option("--events", config.events, "pose-update events file");
    if (needsCodec) {
      cmd->add_option("--codec", config.codec, "trained codec file");
    }
    cmd->add_option("--workdir", config.workdir, "output / cache directory");
    cmd->add_option("--set", overrides, "config override key=value")->take_all();
  };

  auto* build = app.add_subcommand("build", "encode a sequence into a global map");
  addConfigOptions(build, true);

  auto* twopath = app.add_subcommand(
      "twopath", "compare transform-then-encode against encode-then-transform per frame");
  addConfigOptions(twopath, true);

  // --- remap ---------------------------------------------------------------
  auto* remapCmd = app.add_subcommand("remap", "apply pose events to a saved session");
  std::string remapWorkdir;
  std::string remapEvents;
  remapCmd->add_option("--workdir", remapWorkdir, "session directory from 'build'")->required();
  remapCmd->add_option("--events", remapEvents, "pose-update events file")->required();

  // --- mesh ----------------------------------------------------------------
  auto* meshCmd = app.add_subcommand("mesh", "extract a surface from a map file");
  std::string meshMap, meshCodec, meshOutput = "surface.ply";
  int meshResolution = kDefaultMeshResolution;
  double meshSigmaD = kDefaultSigmaThreshold;
  meshCmd->add_option("--map", meshMap, "map file (.nim)")->required();
  meshCmd->add_option("--codec", meshCodec, "codec file (.nic)")->required();
  meshCmd->add_option("--output", meshOutput, ".ply or .obj output")->capture_default_str();
  meshCmd->add_option("--resolution", meshResolution, "samples per voxel axis")
      ->capture_default_str();
  meshCmd->add_option("--sigma-d", meshSigmaD, "exclude samples with sigma above this")
      ->capture_default_str();

  // --- eval ----------------------------------------------------------------
  auto* evalCmd = app.add_subcommand("eval", "accuracy / completeness between two surfaces");
  std::string evalRecon, evalReference, evalOutput;
  int evalSamples = kDefaultMetricSamples;
  std::uint64_t evalSeed = 0;
  evalCmd->add_option("--recon", evalRecon, "reconstructed mesh or cloud")->required();
  evalCmd->add_option("--reference", evalReference, "reference mesh or cloud")->required();
  evalCmd->add_option("--samples", evalSamples, "surface samples per mesh")
      ->capture_default_str();
  evalCmd->add_option("--seed", evalSeed)->capture_default_str();
  evalCmd->add_option("--output", evalOutput, "write the JSON record here too");

  CLI11_PARSE(app, argc, argv);

  const auto finalizeConfig = [&]() {
    if (!configPath.empty()) {
      PipelineConfig fromFile = loadConfig(configPath);
      // Explicit flags win over config-file values.
      if (config.frames.empty()) config.frames = fromFile.frames;
      if (config.trajectory.empty()) config.trajectory = fromFile.trajectory;
      if (config.events.empty()) config.events = fromFile.events;
      if (config.codec.empty()) config.codec = fromFile.codec;
      if (config.workdir.empty()) config.workdir = fromFile.workdir;
      config.voxelSize = fromFile.voxelSize;
      config.k = fromFile.k;
      config.sigmaD = fromFile.sigmaD;
      config.resolution = fromFile.resolution;
      config.deltaT = fromFile.deltaT;
      config.minPoints = fromFile.minPoints;
      config.seed = fromFile.seed;
      config.meshSamples = fromFile.meshSamples;
      config.normalK = fromFile.normalK;
    }
    for (const std::string& kv : overrides) {
      applyOverride(config, kv);
    }
  };

  if (train->parsed()) {
    TrainReport report;
    const Codec codec = trainCodec(trainerConfig, &report);
    saveCodec(codec, trainOutput);
    nlohmann::json j;
    j["initial_holdout_nll"] = report.initialHoldoutNll;
    j["final_holdout_nll"] = report.finalHoldoutNll;
    j["iterations"] = report.iterations;
    j["seconds"] = report.seconds;
    j["train_items"] = report.trainItems;
    j["holdout_items"] = report.holdoutItems;
    std::cout << j.dump(2) << std::endl;
    if (!trainReportPath.empty()) {
      std::ofstream out(trainReportPath);
      out << j.dump(2) << '\n';
    }
    std::cerr << "codec written to " << trainOutput << "\n";
    return 0;
  }
  if (build->parsed()) {
    finalizeConfig();
    const SequenceResult result = runSequence(config);
    std::cout << result.report.toJson().dump(2) << std::endl;
    return 0;
  }
  if (twopath->parsed()) {
    finalizeConfig();
    const TwoPathResult result = runTwoPath(config);
    std::cout << result.toJson().dump(2) << std::endl;
    return 0;
  }
  if (remapCmd->parsed()) {
    const std::vector<PoseEvent> events = readEvents(remapEvents);
    const SequenceReport report = applyEventsToSession(remapWorkdir, events);
    std::cout << report.toJson().dump(2) << std::endl;
    return 0;
  }
  if (meshCmd->parsed()) {
    const ImplicitMap map = loadMap(meshMap);
    const Codec codec = loadCodec(meshCodec);
    const TriangleMesh mesh = extractMeshFromMap(map, codec, meshResolution, meshSigmaD);
    writeMesh(mesh, meshOutput);
    std::cerr << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
              << " triangles -> " << meshOutput << "\n";
    return 0;
  }
  if (evalCmd->parsed()) {
    const auto recon = surfacePoints(evalRecon, evalSamples, evalSeed);
    const auto reference = surfacePoints(evalReference, evalSamples, evalSeed + 1);
    const nlohmann::json record = evalSurfaceRecord(recon, reference);
    std::cout << record.dump(2) << std::endl;
    if (!evalOutput.empty()) {
      std::ofstream out(evalOutput);
      out << record.dump(2) << '\n';
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return runCli(argc, argv);
  } catch (const nimap::FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
  } catch (const nimap::IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
  } catch (const nimap::GridError& e) {
    std::cerr << "error: grid: " << e.what() << "\n";
  } catch (const nimap::ConsistencyError& e) {
    std::cerr << "error: consistency: " << e.what() << "\n";
  } catch (const nimap::PoseError& e) {
    std::cerr << "error: pose: " << e.what() << "\n";
  } catch (const nimap::TrainingError& e) {
    std::cerr << "error: training: " << e.what() << "\n";
  } catch (const nimap::DimensionError& e) {
    std::cerr << "error: dimension: " << e.what() << "\n";
  } catch (const nimap::EmptyInputError& e) {
    std::cerr << "error: empty-input: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}
