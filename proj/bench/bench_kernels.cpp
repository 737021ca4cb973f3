// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "resqrl/simulation.hpp"

using namespace resqrl;

namespace {

const PosteriorSample& fitted() {
    static const PosteriorSample post = [] {
        Rng rng(1);
        const auto data = simulate_benchmark(3.20, 300, rng).data;
        MCMCConfig cfg;
        cfg.burn_in = 400;
        cfg.iterations = 1200;
        cfg.thin = 20;
        cfg.seed = 2;
        return run_edpmm(data, make_base_measure(data), cfg);
    }();
    return post;
}

void BM_Osqc(benchmark::State& state, Exec exec) {
    const auto& post = fitted();
    OsqcRequest req;
    req.cells = Scenario::get(1).default_cells();
    req.cohort_size = static_cast<int>(state.range(0));
    req.seed = 3;
    for (auto _ : state) benchmark::DoNotOptimize(osqc(post.draws, req, exec));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(post.draws.size()));
}

void BM_TrueOsqc(benchmark::State& state, Exec exec) {
    const auto cells = Scenario::get(1).default_cells();
    for (auto _ : state) benchmark::DoNotOptimize(true_osqc(cells, state.range(0), 4, exec));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Osqc, serial, Exec::Serial)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Osqc, parallel, Exec::Parallel)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrueOsqc, serial, Exec::Serial)->Arg(1000000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrueOsqc, parallel, Exec::Parallel)->Arg(1000000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
