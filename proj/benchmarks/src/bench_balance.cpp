#include <benchmark/benchmark.h>

#include "pulmo/balance.hpp"

using namespace pulmo;

namespace {

std::vector<std::vector<float>> rows(std::size_t n, std::size_t dim, Rng& rng) {
    std::vector<std::vector<float>> out(n, std::vector<float>(dim));
    for (auto& r : out)
        for (auto& v : r) v = static_cast<float>(rng.uniform());
    return out;
}

// Minority classes of the ternary set at full spectrogram size are ~75 rows
// of 128x926 values.
void BM_Smote(benchmark::State& state) {
    Rng data(1);
    const auto minority = rows(75, 128 * 926 / 16, data);
    const std::vector<RowView> view(minority.begin(), minority.end());
    const auto jobs = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        Rng rng(2);
        benchmark::DoNotOptimize(smote(view, 825, 5, rng, jobs).rows.data());
    }
}
BENCHMARK(BM_Smote)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_NearestNeighbors(benchmark::State& state) {
    Rng data(3);
    const auto pool = rows(static_cast<std::size_t>(state.range(0)), 512, data);
    const std::vector<RowView> view(pool.begin(), pool.end());
    for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbors(view, view, 5, true).data());
}
BENCHMARK(BM_NearestNeighbors)->Arg(100)->Arg(900)->Unit(benchmark::kMillisecond);

}  // namespace
