// Serial vs OpenMP timing for the GEMM kernel and the conv/attention ops built on it.
#include <benchmark/benchmark.h>

#include <vector>

#include "phaforce/nn/kernels.hpp"
#include "phaforce/nn/ops.hpp"
#include "phaforce/rng.hpp"

using namespace phaforce;
using namespace phaforce::nn;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

Tensor random_tensor(Shape s, std::uint64_t seed) {
    auto n = numel(s);
    return Tensor::from(std::move(s), random_vec(n, seed));
}

template <void (*Gemm)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t)>
void BM_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto A = random_vec(n * n, 1), B = random_vec(n * n, 2);
    std::vector<double> C(n * n);
    for (auto _ : state) {
        std::fill(C.begin(), C.end(), 0.0);
        Gemm(A.data(), B.data(), C.data(), n, n, n);
        benchmark::DoNotOptimize(C.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

void BM_conv2d(benchmark::State& state) {
    kernels::set_backend(state.range(0) ? kernels::Backend::Parallel : kernels::Backend::Serial);
    auto x = random_tensor({64, 32, 32, 1}, 3);
    auto k = random_tensor({3, 3, 1, 8}, 4);
    auto b = random_tensor({8}, 5);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, 2, 1).data().data());
    kernels::set_backend(kernels::Backend::Parallel);
}

void BM_tcn_conv(benchmark::State& state) {
    kernels::set_backend(state.range(0) ? kernels::Backend::Parallel : kernels::Backend::Serial);
    auto x = random_tensor({64 * 36, 32}, 6);
    auto k = random_tensor({2, 32, 32}, 7);
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(dilated_causal_conv1d(x, k, 64, 4).data().data());
    kernels::set_backend(kernels::Backend::Parallel);
}

}  // namespace

BENCHMARK(BM_gemm<kernels::serial::gemm_nn>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<kernels::parallel::gemm_nn>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_conv2d)->Name("conv2d")->Arg(0)->Arg(1);
BENCHMARK(BM_tcn_conv)->Name("tcn_conv")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
