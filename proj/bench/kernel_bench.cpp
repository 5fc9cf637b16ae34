// OpenMP kernels against their serial reference counterparts, on layer
// shapes taken from the desk and paper presets. Thread count follows
// OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <vector>

#include "msa/kernels/ops.hpp"
#include "msa/kernels/reference.hpp"
#include "msa/random.hpp"

using namespace msa;

namespace {

Tensor<float> random(Shape s, std::uint64_t seed)
{
    Tensor<float> t(s);
    Rng rng(seed);
    for (auto& v : t.span()) v = float(rng.uniform(-1.0, 1.0));
    return t;
}

// args: channels, spatial size, dilation
void conv_args(benchmark::internal::Benchmark* b)
{
    b->Args({8, 64, 1})->Args({16, 32, 2})->Args({32, 64, 1})->Args({64, 32, 4});
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1)), d = int(state.range(2));
    const auto x = random({2, c, s, s}, 1);
    const auto w = random({c, c, 3, 3}, 2);
    std::vector<float> bias(std::size_t(c), 0.1f);
    Tensor<float> y;
    for (auto _ : state) {
        if constexpr (Reference) kernels::reference::conv2d_forward<float>(x, w, bias, d, y);
        else kernels::conv2d_forward<float>(x, w, bias, d, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * 2 * c * c * 9 * s * s);  // flops
}

template <bool Reference>
void BM_ConvBackwardInput(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1)), d = int(state.range(2));
    const auto gy = random({2, c, s, s}, 3);
    const auto w = random({c, c, 3, 3}, 4);
    Tensor<float> gx;
    for (auto _ : state) {
        if constexpr (Reference) kernels::reference::conv2d_backward_input<float>(gy, w, d, gx);
        else kernels::conv2d_backward_input<float>(gy, w, d, gx);
        benchmark::DoNotOptimize(gx.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * 2 * c * c * 9 * s * s);
}

template <bool Reference>
void BM_ConvBackwardWeight(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1)), d = int(state.range(2));
    const auto x = random({2, c, s, s}, 5);
    const auto gy = random({2, c, s, s}, 6);
    Tensor<float> gw(c, c, 3, 3);
    std::vector<float> gb(static_cast<std::size_t>(c));
    for (auto _ : state) {
        if constexpr (Reference) kernels::reference::conv2d_backward_weight<float>(x, gy, d, gw, gb);
        else kernels::conv2d_backward_weight<float>(x, gy, d, gw, gb);
        benchmark::DoNotOptimize(gw.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * 2 * c * c * 9 * s * s);
}

template <bool Reference>
void BM_GroupNorm(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1));
    const auto x = random({2, c, s, s}, 7);
    const auto gy = random({2, c, s, s}, 8);
    std::vector<float> gamma(std::size_t(c), 1.0f), beta(std::size_t(c), 0.0f), gg(static_cast<std::size_t>(c)), gbt(static_cast<std::size_t>(c));
    Tensor<float> y, gx;
    kernels::GroupNormStats<float> stats;
    const int groups = c >= 8 ? 8 : c;
    for (auto _ : state) {
        if constexpr (Reference) {
            kernels::reference::group_norm_forward<float>(x, groups, gamma, beta, 1e-5f, y, stats);
            kernels::reference::group_norm_backward<float>(gy, x, stats, groups, gamma, gx, gg, gbt);
        } else {
            kernels::group_norm_forward<float>(x, groups, gamma, beta, 1e-5f, y, stats);
            kernels::group_norm_backward<float>(gy, x, stats, groups, gamma, gx, gg, gbt);
        }
        benchmark::DoNotOptimize(gx.data());
    }
    state.SetBytesProcessed(state.iterations() * std::int64_t(x.size()) * 4 * 4);
}

template <bool Reference>
void BM_Upsample(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1)), f = int(state.range(2));
    const auto x = random({2, c, s, s}, 9);
    Tensor<float> y, gx;
    for (auto _ : state) {
        if constexpr (Reference) {
            kernels::reference::upsample_bilinear_forward<float>(x, f, y);
            kernels::reference::upsample_bilinear_backward<float>(y, f, x.shape(), gx);
        } else {
            kernels::upsample_bilinear_forward<float>(x, f, y);
            kernels::upsample_bilinear_backward<float>(y, f, x.shape(), gx);
        }
        benchmark::DoNotOptimize(gx.data());
    }
    state.SetBytesProcessed(state.iterations() * std::int64_t(y.size()) * 4 * 2);
}

template <bool Reference>
void BM_MaxPool(benchmark::State& state)
{
    const int c = int(state.range(0)), s = int(state.range(1));
    const auto x = random({2, c, s, s}, 10);
    Tensor<float> y;
    std::vector<std::uint32_t> arg;
    for (auto _ : state) {
        if constexpr (Reference) kernels::reference::maxpool_forward<float>(x, 2, y, arg);
        else kernels::maxpool_forward<float>(x, 2, y, arg);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetBytesProcessed(state.iterations() * std::int64_t(x.size()) * 4);
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/openmp")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/openmp")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupNorm<true>)->Name("group_norm/reference")->Args({32, 64})->Args({64, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GroupNorm<false>)->Name("group_norm/openmp")->Args({32, 64})->Args({64, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample<true>)->Name("upsample/reference")->Args({16, 32, 4})->Args({8, 16, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample<false>)->Name("upsample/openmp")->Args({16, 32, 4})->Args({8, 16, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool<true>)->Name("maxpool/reference")->Args({32, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool<false>)->Name("maxpool/openmp")->Args({32, 128})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
