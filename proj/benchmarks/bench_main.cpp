#include <benchmark/benchmark.h>

#include "ibpt/ib_solver.hpp"
#include "ibpt/oracles.hpp"
#include "ibpt/threshold_g.hpp"
#include "ibpt/transitions.hpp"

namespace {

using namespace ibpt;

void BM_BaStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto joint = random_categorical(n, n, 1.0, 7).joint();
  Encoder enc = jittered_uniform_encoder(n, n + 1, 1.0, 3);
  for (auto _ : state) {
    enc = ba_step(joint, enc, 5.0);
    benchmark::DoNotOptimize(enc.pzx().data());
  }
}
BENCHMARK(BM_BaStep)->Arg(3)->Arg(10)->Arg(32);

void BM_GSvd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto joint = random_categorical(n, n, 1.0, 7).joint();
  const Encoder enc = jittered_uniform_encoder(n, n, 1.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(g_svd(joint, enc).g_value);
}
BENCHMARK(BM_GSvd)->Arg(3)->Arg(6)->Arg(12);

void BM_GEigen(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto joint = random_categorical(n, n, 1.0, 7).joint();
  const Encoder enc = jittered_uniform_encoder(n, n, 1.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(g_eigen(joint, enc).g_value);
}
BENCHMARK(BM_GEigen)->Arg(3)->Arg(6)->Arg(12);

void BM_SolveIb(benchmark::State& state) {
  const auto joint = random_categorical(4, 4, 1.0, 7).joint();
  SolverConfig cfg;
  cfg.restarts = 3;
  cfg.accelerate = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(solve_ib(joint, 5, 6.0, cfg).objective);
}
BENCHMARK(BM_SolveIb)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DiscoverFixture(benchmark::State& state) {
  const auto joint = cifar10_confusion().joint();
  TransitionConfig cfg;
  cfg.solver.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(discover_transitions(joint, 11, cfg).points.size());
}
BENCHMARK(BM_DiscoverFixture)->Unit(benchmark::kSecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
