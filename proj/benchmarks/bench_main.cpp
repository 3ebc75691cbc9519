// Per-step costs of the inner loops.
#include <benchmark/benchmark.h>

#include "nswip/dynamics.hpp"
#include "nswip/gibbs_markov.hpp"
#include "nswip/rng.hpp"
#include "nswip/stadium.hpp"

using namespace nswip;

static void BM_PhiloxU64(benchmark::State& state) {
  RngStream rng = rng_stream(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rng.next_u64());
}
BENCHMARK(BM_PhiloxU64);

static void BM_OrbitStep(benchmark::State& state) {
  const MapKind kind = static_cast<MapKind>(state.range(0));
  const MapSystem sys = kind == MapKind::Lsv             ? MapSystem::lsv(2.0)
                        : kind == MapKind::DoubleNeutral ? MapSystem::double_neutral()
                                                         : MapSystem::afn(1.5);
  const auto obs = ObservableSpec::cos_mode(2);
  Orbit orbit(sys, 0.3141592653589793);
  double acc = 0.0;
  for (auto _ : state) {
    acc += obs(orbit.x());
    orbit.advance();
  }
  benchmark::DoNotOptimize(acc);
  state.SetLabel(sys.name());
}
BENCHMARK(BM_OrbitStep)->Arg(0)->Arg(1)->Arg(2);

static void BM_StadiumCollision(benchmark::State& state) {
  const StadiumGeometry geom(2.0);
  RngStream rng = rng_stream(2, 0);
  CollisionState s = liouville_sample(geom, rng);
  for (auto _ : state) {
    s = next_collision(geom, s).next;
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_StadiumCollision);

static void BM_GmSampler(benchmark::State& state) {
  const auto model = build_model(static_cast<std::uint32_t>(state.range(0)), 0.5);
  RngStream rng = rng_stream(3, 0);
  GmSampler sampler(model, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sampler.next());
}
BENCHMARK(BM_GmSampler)->Arg(1'000)->Arg(1'000'000);

static void BM_TransferApply(benchmark::State& state) {
  const auto model = build_model(static_cast<std::uint32_t>(state.range(0)), 0.5);
  const auto u = SymbolFunction::sign(model.k_max());
  for (auto _ : state) benchmark::DoNotOptimize(transfer_apply(model, u));
}
BENCHMARK(BM_TransferApply)->Arg(1'000'000);
BENCHMARK_MAIN();
