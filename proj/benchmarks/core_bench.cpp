#include <benchmark/benchmark.h>

#include <random>

#include "cvsync/alignment.hpp"
#include "cvsync/geometry.hpp"
#include "cvsync/mesh.hpp"
#include "cvsync/messages.hpp"
#include "cvsync/sha256.hpp"

using namespace cvsync;

namespace {

const TriangleMesh& heart() {
  static const TriangleMesh m = load_mesh_file(CVSYNC_MODEL);
  return m;
}

Vec3 random_vec(std::mt19937_64& g, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  return {u(g), u(g), u(g)};
}

void BM_PanToRotation(benchmark::State& state) {
  const PanGesture pan{12.0, -7.0, CameraPose{{0, 0, 1}, UnitQuaternion::from_axis_angle({0, 1, 0}, 0.3)}};
  for (auto _ : state) benchmark::DoNotOptimize(pan_to_rotation(pan));
}
BENCHMARK(BM_PanToRotation);

void BM_Raycast(benchmark::State& state) {
  std::mt19937_64 g(2);
  std::vector<Ray> rays;
  for (int i = 0; i < 256; ++i) rays.push_back(Ray::make(random_vec(g, 0.5) + Vec3{0, 0, 2}, Vec3{0, 0, -1} + random_vec(g, 0.1)));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(raycast(heart(), rays[i++ % rays.size()]));
  state.counters["triangles"] = static_cast<double>(heart().triangles.size());
}
BENCHMARK(BM_Raycast);

void BM_SliceMesh(benchmark::State& state) {
  const auto plane = SlicePlane::make({0, 0, 0}, {0.3, 0.2, 1.0}, KeepSide::positive);
  const bool cap = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(slice_mesh(heart(), plane, cap));
}
BENCHMARK(BM_SliceMesh)->Arg(0)->Arg(1);

void BM_EstimateAlignment(benchmark::State& state) {
  std::mt19937_64 g(3);
  FeaturePointSet a, b;
  const auto r = UnitQuaternion::from_axis_angle({1, 2, 3}, 0.7);
  for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(state.range(0)); ++i) {
    const Vec3 p = random_vec(g, 1.0);
    a.points.push_back({i, p});
    b.points.push_back({i, r.rotate(p) + Vec3{0.1, -0.2, 0.3}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(estimate_alignment(a, b));
}
BENCHMARK(BM_EstimateAlignment)->Arg(4)->Arg(10)->Arg(100);

void BM_EnvelopeRoundTrip(benchmark::State& state) {
  const Envelope e = make_envelope(ModelChunk{3, Bytes(static_cast<std::size_t>(state.range(0)), 0x5a)}, PeerId{}, 42);
  for (auto _ : state) {
    const auto frame = encode_envelope(e);
    benchmark::DoNotOptimize(decode_envelope(frame));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_EnvelopeRoundTrip)->Arg(16)->Arg(64 << 10);

void BM_Sha256(benchmark::State& state) {
  const Bytes data(static_cast<std::size_t>(state.range(0)), 0xa5);
  for (auto _ : state) benchmark::DoNotOptimize(sha256(data));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Sha256)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
