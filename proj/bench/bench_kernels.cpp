// Serial reference kernels vs their OpenMP counterparts.
//   ./bench_kernels --benchmark_filter=assign

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "mtf/kernels.hpp"

using namespace mtf::kernels;

namespace {

std::vector<std::int16_t> random_scores(std::size_t n) {
    std::mt19937_64 gen(1);
    std::vector<std::int16_t> v(n);
    for (auto& s : v) s = static_cast<std::int16_t>(gen() % 101);
    return v;
}

std::vector<double> random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n * dim);
    for (auto& x : v) x = d(gen);
    return v;
}

ScoreMatrix random_matrix(std::size_t rows) {
    ScoreMatrix m;
    m.rows = rows;
    m.cols = 2;
    m.values = random_scores(rows * 2);
    return m;
}

constexpr std::size_t kDim = 64;

template <Counts101 (*F)(std::span<const std::int16_t>)>
void BM_histogram(benchmark::State& state) {
    const auto scores = random_scores(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(F(scores));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <AssignResult (*F)(std::span<const double>, std::size_t, std::span<const double>, std::span<std::uint32_t>,
                            std::span<double>)>
void BM_assign(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto pts = random_points(n, kDim, 2);
    const auto cen = random_points(k, kDim, 3);
    std::vector<std::uint32_t> labels(n, 0);
    std::vector<double> sq(n);
    for (auto _ : state) benchmark::DoNotOptimize(F(pts, kDim, cen, labels, sq));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <std::vector<std::uint64_t> (*F)(std::span<const double>, std::size_t, std::span<const std::uint32_t>,
                                          std::span<double>)>
void BM_update(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto pts = random_points(n, kDim, 4);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % k);
    std::vector<double> cen(k * kDim);
    for (auto _ : state) benchmark::DoNotOptimize(F(pts, kDim, labels, cen));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <void (*F)(const ScoreMatrix&, std::span<const int>, MaskRule, std::span<std::uint8_t>)>
void BM_filter_mask(benchmark::State& state) {
    const auto m = random_matrix(static_cast<std::size_t>(state.range(0)));
    const std::vector<int> thresholds{70, 65};
    std::vector<std::uint8_t> keep(m.rows);
    for (auto _ : state) {
        F(m, thresholds, MaskRule::All, keep);
        benchmark::DoNotOptimize(keep.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_histogram<serial::histogram>)->Name("histogram/serial")->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_histogram<omp::histogram>)->Name("histogram/omp")->Arg(1 << 16)->Arg(1 << 22);

BENCHMARK(BM_assign<serial::assign>)->Name("assign/serial")->Args({20000, 16})->Args({20000, 256});
BENCHMARK(BM_assign<omp::assign>)->Name("assign/omp")->Args({20000, 16})->Args({20000, 256});

BENCHMARK(BM_update<serial::update_centroids>)->Name("update_centroids/serial")->Args({100000, 64});
BENCHMARK(BM_update<omp::update_centroids>)->Name("update_centroids/omp")->Args({100000, 64});

BENCHMARK(BM_filter_mask<serial::filter_mask>)->Name("filter_mask/serial")->Arg(1 << 20);
BENCHMARK(BM_filter_mask<omp::filter_mask>)->Name("filter_mask/omp")->Arg(1 << 20);

BENCHMARK_MAIN();
