#include <benchmark/benchmark.h>

#include "pulmo/cnn.hpp"
#include "pulmo/ops.hpp"

using namespace pulmo;
using namespace pulmo::nn;

namespace {

Tensor<float> filled(Shape shape, Rng& rng, bool grad) {
    std::vector<float> v(numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return Tensor<float>(std::move(shape), std::move(v), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const auto x = filled({16, 128, width, 1}, rng, false);
    const auto k = filled({3, 3, 1, 10}, rng, false);
    const auto b = filled({10}, rng, false);
    for (auto _ : state) {
        Tape tape(false);
        benchmark::DoNotOptimize(conv2d(tape, x, k, b).data().data());
    }
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2dForward)->Arg(128)->Arg(926)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
    Rng rng(2);
    const auto x = filled({16, 128, 128, 1}, rng, true);
    const auto k = filled({3, 3, 1, 10}, rng, true);
    const auto b = filled({10}, rng, true);
    for (auto _ : state) {
        Tape tape;
        auto y = conv2d(tape, x, k, b);
        auto loss = sse_loss(tape, y, Tensor<float>(y.shape()));
        backward(tape, loss);
    }
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_CnnTrainStep(benchmark::State& state) {
    Rng init(3);
    cnn::Architecture arch;
    arch.cols = 256;
    cnn::CnnModel<float> model(arch, init);
    auto params = model.parameters();
    const auto x = filled({16, 128, 256, 1}, init, false);
    const std::vector<std::size_t> labels(16, 1);
    const auto targets = one_hot<float>(labels, 3);
    AdamState<float> adam;
    Rng drop(4);
    for (auto _ : state) {
        Tape tape;
        zero_grads<float>(params);
        auto loss = softmax_cross_entropy(tape, model.forward(tape, x, Mode::Train, &drop), targets);
        backward(tape, loss);
        adam_step<float>(params, adam);
    }
}
BENCHMARK(BM_CnnTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
