#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "granlab/analysis.hpp"
#include "granlab/kernels.hpp"

using namespace granlab;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = nd(rng);
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kernels::GemmDims d{n, n, n};
    const std::vector<double> a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::omp::gemm(d, false, false, a, b, c);
        else
            kernels::serial::gemm(d, false, false, a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
    state.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

// Batch-by-width shape of a critic layer: [B, 2] inputs through 64 wide layers.
template <bool Parallel>
void BM_GemmLayer(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const kernels::GemmDims d{batch, 64, 64};
    const std::vector<double> a = random_buffer(batch * 64, 3), b = random_buffer(64 * 64, 4);
    std::vector<double> c(batch * 64);
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::omp::gemm(d, false, true, a, b, c);
        else
            kernels::serial::gemm(d, false, true, a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
}

template <kernels::Exec E>
void BM_AlignmentSuite(benchmark::State& state) {
    analysis::SuiteOptions opt;
    opt.n_pairs = static_cast<std::size_t>(state.range(0));
    opt.exec = E;
    for (auto _ : state) benchmark::DoNotOptimize(analysis::random_theorem1_suite(opt).failures);
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmLayer<false>)->Name("gemm_layer/serial")->Arg(64)->Arg(1024);
BENCHMARK(BM_GemmLayer<true>)->Name("gemm_layer/omp")->Arg(64)->Arg(1024);
BENCHMARK(BM_AlignmentSuite<kernels::Exec::serial>)->Name("alignment_suite/serial")->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AlignmentSuite<kernels::Exec::parallel>)->Name("alignment_suite/omp")->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
