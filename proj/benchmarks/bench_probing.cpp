#include <benchmark/benchmark.h>

#include "qsakit/probing.hpp"

using namespace qsa;

static void ClockAdvance(benchmark::State& state) {
  ClockState clock(FrequencyBasis::log_ratios({{2, 1}, {3, 1}, {5, 1}}));
  for (auto _ : state) {
    clock.advance(0.37);
    benchmark::DoNotOptimize(clock.phase(0));
  }
}
BENCHMARK(ClockAdvance);

static void ProbeEvalFromClock(benchmark::State& state) {
  const FrequencyBasis basis = FrequencyBasis::log_ratios({{2, 1}, {3, 1}});
  ProbeSpec spec(basis, 2);
  spec.add_term(0, 2.0, 0, 0.0);
  spec.add_term(1, 2.0, 1, 0.0);
  ClockState clock(basis);
  Vec out(2);
  for (auto _ : state) {
    clock.advance(1.0);
    spec.value(clock, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(ProbeEvalFromClock);

static void PoissonSolveProducts(benchmark::State& state) {
  const FrequencyBasis basis = FrequencyBasis::log_ratios({{2, 1}, {3, 1}});
  ProbeSpec spec(basis, 2);
  spec.add_term(0, 2.0, 0, 0.0);
  spec.add_term(1, 2.0, 1, 0.0);
  for (auto _ : state) {
    const ProbePoisson pp = probe_poisson(spec);
    benchmark::DoNotOptimize(pp.sigma(0, 0));
  }
}
BENCHMARK(PoissonSolveProducts);
