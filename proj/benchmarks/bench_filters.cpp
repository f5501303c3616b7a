#include <benchmark/benchmark.h>

#include "qsakit/filters.hpp"

using namespace qsa;

static void SecondOrderStep(benchmark::State& state) {
  SecondOrderFilter f(0.05, 0.8);
  double u = 0.3;
  for (auto _ : state) {
    u = f.step(u, 0.1);
    benchmark::DoNotOptimize(u);
  }
}
BENCHMARK(SecondOrderStep);

static void PrAverageTrajectory(benchmark::State& state) {
  Trajectory traj;
  traj.dim = 2;
  traj.dt = 1.0;
  const std::size_t n = static_cast<std::size_t>(state.range());
  traj.states.resize(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    traj.states[2 * k] = std::sin(0.01 * k);
    traj.states[2 * k + 1] = std::cos(0.01 * k);
  }
  for (auto _ : state) {
    const PrAverage pr = pr_average(traj, 5.0);
    benchmark::DoNotOptimize(pr.value.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range());
}
BENCHMARK(PrAverageTrajectory)->Arg(100000);
