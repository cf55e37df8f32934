#include <benchmark/benchmark.h>

#include <vector>

#include "canids/graph.hpp"
#include "canids/nn/kernels.hpp"
#include "canids/nn/rng.hpp"
#include "canids/synth.hpp"

using namespace canids;
using nn::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    nn::Rng rng(seed);
    Matrix m(r, c);
    for (auto& v : m.values()) v = rng.uniform(-1.0, 1.0);
    return m;
}

ExecPolicy policy_arg(const benchmark::State& state) {
    return state.range(1) ? ExecPolicy::Parallel : ExecPolicy::Serial;
}

void BM_gemm_nn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    Matrix c(n, n);
    for (auto _ : state) {
        nn::kernels::gemm_nn(a, b, c, policy_arg(state));
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_gemm_tn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    Matrix c(n, n);
    for (auto _ : state) {
        nn::kernels::gemm_tn(a, b, c, policy_arg(state));
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_gemm_nt(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    Matrix c(n, n);
    for (auto _ : state) {
        nn::kernels::gemm_nt(a, b, c, policy_arg(state));
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_axpy(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(n, 256, 3);
    Matrix y = random_matrix(n, 256, 4);
    for (auto _ : state) {
        nn::kernels::axpy(1e-3, x, y, policy_arg(state));
        benchmark::DoNotOptimize(y.values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 256));
}

void BM_build_windows(benchmark::State& state) {
    const auto frames = generate_synthetic_log(demo_synth_config(demo_duration_for_frames(50000)), 1);
    WindowOptions options;
    options.window = static_cast<std::size_t>(state.range(0));
    options.stride = options.window;
    for (auto _ : state) {
        auto graphs = build_windows(frames, options, policy_arg(state));
        benchmark::DoNotOptimize(graphs.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}

}  // namespace

// Second argument: 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_gemm_nn)->ArgsProduct({{64, 256}, {0, 1}});
BENCHMARK(BM_gemm_tn)->ArgsProduct({{64, 256}, {0, 1}});
BENCHMARK(BM_gemm_nt)->ArgsProduct({{64, 256}, {0, 1}});
BENCHMARK(BM_axpy)->ArgsProduct({{1024, 8192}, {0, 1}});
BENCHMARK(BM_build_windows)->ArgsProduct({{50, 100}, {0, 1}});

BENCHMARK_MAIN();
