#include <benchmark/benchmark.h>

#include "nimap/mesh.hpp"
#include "nimap/pipeline.hpp"
#include "nimap/primitives.hpp"
#include "nimap/transform.hpp"

namespace {

using namespace nimap;

PointCloud benchCloud(int count) {
  Primitive room = Primitive::unionOf(
      Primitive::box(Vec3(0.0, 0.0, 0.45), Vec3(1.0, 1.0, 0.45)),
      Primitive::box(Vec3(0.35, -0.25, 0.25), Vec3(0.25, 0.2, 0.25)));
  return samplePrimitiveSdf(room, count, 1).surface;
}

const Codec& benchCodec() {
  static const Codec codec = makeCodec(1);
  return codec;
}

void BM_EncodeVoxel(benchmark::State& state) {
  const auto cloud = benchCloud(static_cast<int>(state.range(0)));
  const Vec3 center = cloud.front().position;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encodeVoxel(benchCodec().encoder, cloud, center));
  }
}
BENCHMARK(BM_EncodeVoxel)->Arg(32)->Arg(128)->Arg(512);

void BM_BuildLocalMap(benchmark::State& state) {
  const auto cloud = benchCloud(static_cast<int>(state.range(0)));
  const GridSpec grid{0.1, Vec3::Zero()};
  for (auto _ : state) {
    benchmark::DoNotOptimize(buildLocalMap(benchCodec(), cloud, grid));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildLocalMap)->Arg(10000)->Arg(30000)->Unit(benchmark::kMillisecond);

void BM_IntegrateFrame(benchmark::State& state) {
  const auto cloud = benchCloud(static_cast<int>(state.range(0)));
  const GridSpec grid{0.1, Vec3::Zero()};
  std::int64_t id = 0;
  MappingSession session(benchCodec(), grid, SessionParams{});
  for (auto _ : state) {
    FramePacket packet;
    packet.frameId = id++;
    packet.cloud = cloud;
    session.integrateFrame(packet);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IntegrateFrame)->Arg(30000)->Unit(benchmark::kMillisecond);

void BM_RemapCachedFrame(benchmark::State& state) {
  const auto cloud = benchCloud(30000);
  const GridSpec grid{0.1, Vec3::Zero()};
  MappingSession session(benchCodec(), grid, SessionParams{});
  FramePacket packet;
  packet.frameId = 0;
  packet.cloud = cloud;
  session.integrateFrame(packet);
  double step = 0.001;
  for (auto _ : state) {
    SE3Pose pose;
    pose.translation = Vec3(step, 0.0, 0.0);
    step += 0.001;
    session.updatePose(0, pose);
  }
}
BENCHMARK(BM_RemapCachedFrame)->Unit(benchmark::kMillisecond);

void BM_TransformInterpolate(benchmark::State& state) {
  const auto cloud = benchCloud(30000);
  const GridSpec grid{0.1, Vec3::Zero()};
  const FrameLocalMap local = buildLocalMap(benchCodec(), cloud, grid);
  SE3Pose pose;
  pose.rotation = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  pose.translation = Vec3(0.13, -0.07, 0.09);
  for (auto _ : state) {
    benchmark::DoNotOptimize(transformAndInterpolate(local, pose, grid, 8));
  }
}
BENCHMARK(BM_TransformInterpolate)->Unit(benchmark::kMillisecond);

void BM_ExtractMesh(benchmark::State& state) {
  const auto cloud = benchCloud(30000);
  const GridSpec grid{0.1, Vec3::Zero()};
  const ImplicitMap map = encodeFrameToMap(benchCodec(), cloud, grid);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extractMeshFromMap(map, benchCodec(), 4, 1.0));
  }
}
BENCHMARK(BM_ExtractMesh)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
