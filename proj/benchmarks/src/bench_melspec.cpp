#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "pulmo/melspec.hpp"

using namespace pulmo;

namespace {

AudioClip tone(double seconds) {
    AudioClip clip;
    clip.sample_rate = 22050.0;
    clip.samples.resize(static_cast<std::size_t>(seconds * 22050.0));
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * 440.0 * i / 22050.0));
    return clip;
}

void BM_StftPower(benchmark::State& state) {
    const AudioClip clip = tone(static_cast<double>(state.range(0)));
    const MelConfig config;
    for (auto _ : state) benchmark::DoNotOptimize(stft_power(clip, config).values.data());
}
BENCHMARK(BM_StftPower)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_MelSpectrogram(benchmark::State& state) {
    const AudioClip clip = tone(20.0);
    const MelConfig config;
    for (auto _ : state) benchmark::DoNotOptimize(mel_spectrogram(clip, config).values.values.data());
}
BENCHMARK(BM_MelSpectrogram)->Unit(benchmark::kMillisecond);

}  // namespace
