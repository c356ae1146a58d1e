// Scaling of the three similarity kernels with the image token count: the
// late-interaction score is linear in n1 * n2 while the reduced variant pays
// a one-off reduction and then scores only n_prime tokens per pair.

#include <benchmark/benchmark.h>

#include <random>

#include "wukong/align.hpp"

namespace {

using wukong::EmbeddingSet;
using wukong::Grid;
using wukong::Mat;
namespace align = wukong::align;

constexpr std::size_t kDim = 64;
constexpr std::size_t kTextTokens = 24;

EmbeddingSet<float> random_set(std::size_t n, std::size_t d, std::mt19937_64& rng,
                               std::optional<Grid> grid = std::nullopt) {
    std::normal_distribution<float> dist(0.f, 1.f);
    EmbeddingSet<float> s;
    s.data = Mat<float>(n, d);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data.data()[i] = dist(rng);
    s.mask.assign(n, 1);
    s.grid = grid;
    return align::normalize_rows(s);
}

void bench_global(benchmark::State& state) {
    const auto side = static_cast<std::uint32_t>(state.range(0));
    std::mt19937_64 rng(7);
    const auto img = random_set(side * side, kDim, rng, Grid{side, side});
    const auto txt = random_set(1, kDim, rng);
    Mat<float> img_row = align::image_global_row(img);
    for (auto _ : state) {
        float s = wukong::dot(img_row[0], txt.data[0], kDim);
        benchmark::DoNotOptimize(s);
    }
    state.SetComplexityN(side * side);
}

void bench_tokenwise(benchmark::State& state) {
    const auto side = static_cast<std::uint32_t>(state.range(0));
    std::mt19937_64 rng(7);
    const auto img = random_set(side * side, kDim, rng, Grid{side, side});
    const auto txt = random_set(kTextTokens, kDim, rng);
    for (auto _ : state) {
        auto s = align::tokenwise_similarity(img, txt);
        benchmark::DoNotOptimize(s);
    }
    state.SetComplexityN(side * side);
}

void bench_reduced(benchmark::State& state) {
    const auto side = static_cast<std::uint32_t>(state.range(0));
    std::mt19937_64 rng(7);
    const auto img = random_set(side * side, kDim, rng, Grid{side, side});
    const auto txt = random_set(kTextTokens, kDim, rng);
    align::TokenReducer<float> reducer;
    reducer.init(kDim, kDim, align::kReducedTokensBase, rng);
    for (auto _ : state) {
        auto s = align::reduced_tokenwise_similarity(img, txt, reducer);
        benchmark::DoNotOptimize(s);
    }
    state.SetComplexityN(side * side);
}

// Token reduction amortizes over a caption set: reduce once, then score many
// texts against the n_prime tokens.
void bench_reduced_scoring_only(benchmark::State& state) {
    const auto side = static_cast<std::uint32_t>(state.range(0));
    std::mt19937_64 rng(7);
    const auto img = random_set(side * side, kDim, rng, Grid{side, side});
    const auto txt = random_set(kTextTokens, kDim, rng);
    align::TokenReducer<float> reducer;
    reducer.init(kDim, kDim, align::kReducedTokensBase, rng);
    const auto reduced = align::normalize_rows(align::token_reduce(img, reducer));
    for (auto _ : state) {
        auto s = align::tokenwise_similarity(reduced, txt);
        benchmark::DoNotOptimize(s);
    }
    state.SetComplexityN(side * side);
}

}  // namespace

BENCHMARK(bench_global)->DenseRange(4, 16, 4)->Complexity(benchmark::o1);
BENCHMARK(bench_tokenwise)->DenseRange(4, 16, 4)->Complexity(benchmark::oN);
BENCHMARK(bench_reduced)->DenseRange(4, 16, 4);
BENCHMARK(bench_reduced_scoring_only)->DenseRange(4, 16, 4)->Complexity(benchmark::o1);

BENCHMARK_MAIN();
