#include <benchmark/benchmark.h>

#include <cmath>

#include "qsakit/dynamics.hpp"
#include "qsakit/integrator.hpp"
#include "qsakit/objectives.hpp"

using namespace qsa;

static ProbeSpec bench_probe() {
  std::vector<ProbeTermSpec> terms = {{0, 2.0, 0.25, 0.0, ProbeConvention::RawRadianSin},
                                      {1, 2.0, std::exp(-2.0), 0.0,
                                       ProbeConvention::RawRadianSin}};
  return ProbeSpec::sinusoids(2, terms);
}

static void QsgdEulerSteps(benchmark::State& state) {
  const ProbeSpec probe = bench_probe();
  const FieldPtr field = qsgd1_field(rastrigin2(), ProbingGainPolicy::constant(0.25));
  const double horizon = static_cast<double>(state.range());
  for (auto _ : state) {
    const Trajectory traj =
        integrate_qsa(*field, GainSchedule::clipped_power_law(0.5, 0.85), probe, {1.0, -1.0},
                      ClockState(probe.basis()), 1.0, horizon, BoxProjection::symmetric(5.12, 2));
    benchmark::DoNotOptimize(traj.states.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range());
}
BENCHMARK(QsgdEulerSteps)->Arg(10000)->Arg(100000);

static void SensitivitySteps(benchmark::State& state) {
  Mat a0(2, 2);
  a0(0, 0) = -2.0;
  a0(0, 1) = 1.0;
  a0(1, 1) = -0.5;
  const FieldPtr field = general_linear_field(a0, {a0});
  std::vector<ProbeTermSpec> terms = {{0, 1.0, 0.1, 0.0, ProbeConvention::RawRadianSin}};
  const ProbeSpec probe = ProbeSpec::sinusoids(1, terms, false);
  for (auto _ : state) {
    const Trajectory traj =
        integrate_sensitivity(*field, GainSchedule::constant(0.05), probe, {1.0, 1.0},
                              ClockState(probe.basis()), 0.1, static_cast<double>(state.range()));
    benchmark::DoNotOptimize(traj.channels.front().data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range() * 10);
}
BENCHMARK(SensitivitySteps)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
