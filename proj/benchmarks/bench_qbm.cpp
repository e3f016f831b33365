// bench_qbm.cpp — timings of the main numerical stages

#include <benchmark/benchmark.h>

#include "qbm/coefficients.hpp"
#include "qbm/langevin.hpp"
#include "qbm/phase_space.hpp"

using namespace qbm;

namespace {

InfluenceKernels drude(std::size_t n) {
    PresetParams pp;
    pp.gamma = 0.1;
    pp.temperature = 1.0;
    pp.cutoff = 2.0;
    return preset_kernels(Preset::drude_nonlocal, pp, make_time_grid(0.0, 6.0, n));
}

void BM_KernelBuild(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(drude(static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_KernelBuild)->Arg(101)->Arg(301)->Unit(benchmark::kMillisecond);

void BM_RetardedGreen(benchmark::State& state) {
    const auto k = drude(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_retarded_green(k));
}
BENCHMARK(BM_RetardedGreen)->Arg(101)->Arg(301)->Arg(601)->Unit(benchmark::kMillisecond);

void BM_CoefficientTable(benchmark::State& state) {
    const auto k = drude(static_cast<std::size_t>(state.range(0)));
    const auto g = build_retarded_green(k);
    const auto basis = homogeneous_basis(k);
    for (auto _ : state) benchmark::DoNotOptimize(coefficient_table(k, g, basis));
}
BENCHMARK(BM_CoefficientTable)->Arg(101)->Arg(301)->Arg(601)->Unit(benchmark::kMillisecond);

void BM_Ensemble(benchmark::State& state) {
    const auto k = drude(301);
    const auto factor = factor_noise(k.N);
    const auto dist = InitialDistribution::from_gaussian(vacuum_state(k.system));
    const auto count = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(k, factor, dist, count, 1));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Ensemble)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_FokkerPlanck(benchmark::State& state) {
    const auto k = drude(301);
    const auto table = coefficient_table(k);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto field = gaussian_wigner({1.0, 0.0, 0.5, 0.0, 0.5}, PhaseGrid{-8, 8, -8, 8, n, n});
    FpReport rep;
    for (auto _ : state) benchmark::DoNotOptimize(evolve_fp(field, table, k.system, {0.0, 1.0}, {}, &rep));
    state.counters["steps"] = static_cast<double>(rep.steps);
}
BENCHMARK(BM_FokkerPlanck)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
