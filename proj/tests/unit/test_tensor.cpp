#include <cmath>
#include <functional>

#include "doctest.h"
#include "pulmo/checkpoint.hpp"
#include "pulmo/error.hpp"
#include "pulmo/ops.hpp"
#include "pulmo/optim.hpp"
#include "support.hpp"

using namespace pulmo;
using namespace pulmo::nn;
using T64 = Tensor<double>;

namespace {

constexpr int kSeeds = 10;
constexpr double kTolerance = 1e-6;

// Random linear projection to a scalar so every output entry contributes
// with a distinct weight.
struct Projection {
    T64 weights;
    T64 bias;

    Projection(std::size_t n, Rng& rng)
        : weights(testing::random_tensor<double>({n, 1}, rng, 1.0, false)), bias(Shape{1}) {}

    T64 operator()(Tape& tape, const T64& y) const {
        if (y.size() == 1) return reshape(tape, y, {1, 1});
        return dense(tape, reshape(tape, y, {1, y.size()}), weights, bias);
    }
};

double op_gradient_error(std::vector<T64> params, const std::function<T64(Tape&)>& f, Rng& rng) {
    for (auto& p : params) p.zero_grad();
    Tape probe(false);
    const Projection project(f(probe).size(), rng);
    Tape tape;
    T64 loss = project(tape, f(tape));
    backward(tape, loss);
    return testing::max_gradient_error(params, [&] {
        Tape t(false);
        return project(t, f(t)).item();
    });
}

}  // namespace

TEST_CASE("tensor handles alias storage") {
    T64 a({2, 3});
    T64 b = a;
    b.data()[4] = 7.0;
    CHECK(a.data()[4] == 7.0);
    CHECK(a.same_storage(b));
    T64 c = a.clone();
    c.data()[4] = 1.0;
    CHECK(a.data()[4] == 7.0);
    CHECK_THROWS_AS(T64({2, 2}, std::vector<double>(3)), UsageError);
    CHECK_THROWS_AS(a.item(), UsageError);
}

TEST_CASE("conv2d on a hand example") {
    Tape tape(false);
    // 3x3 input, one 2x2 kernel of ones, bias 1.
    T64 x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    T64 k({2, 2, 1, 1}, {1, 1, 1, 1});
    T64 b({1}, std::vector<double>{1});
    const T64 y = conv2d(tape, x, k, b);
    CHECK(y.shape() == Shape{1, 2, 2, 1});
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{13, 17, 25, 29});
    const T64 s = conv2d(tape, x, k, b, {2, 1});
    CHECK(s.shape() == Shape{1, 2, 2, 1});
    CHECK(s.data()[0] == 2.0);  // only x[0,0] under the padded window
    CHECK_THROWS_AS(conv2d(tape, T64({1, 1, 1, 1}), k, b), UsageError);
}

TEST_CASE("gradient check: conv2d") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(100 + seed);
        auto x = testing::random_tensor<double>({2, 5, 6, 2}, rng);
        auto k = testing::random_tensor<double>({3, 3, 2, 3}, rng);
        auto b = testing::random_tensor<double>({3}, rng);
        CHECK(op_gradient_error({x, k, b}, [&](Tape& t) { return conv2d(t, x, k, b); }, rng) < kTolerance);
        CHECK(op_gradient_error({x, k, b}, [&](Tape& t) { return conv2d(t, x, k, b, {2, 1}); }, rng) < kTolerance);
    }
}

TEST_CASE("gradient check: batchnorm in train mode") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(200 + seed);
        auto x = testing::random_tensor<double>({3, 4, 3, 2}, rng);
        auto g = testing::random_tensor<double>({2}, rng);
        auto b = testing::random_tensor<double>({2}, rng);
        const auto f = [&](Tape& t) {
            BatchNormStats<double> stats;
            return batch_norm(t, x, g, b, stats, Mode::Train);
        };
        CHECK(op_gradient_error({x, g, b}, f, rng) < kTolerance);
    }
}

TEST_CASE("gradient check: dense, relu, sigmoid, add, scale") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(300 + seed);
        auto x = testing::random_tensor<double>({4, 6}, rng);
        auto w = testing::random_tensor<double>({6, 5}, rng);
        auto b = testing::random_tensor<double>({5}, rng);
        auto y = testing::random_tensor<double>({4, 6}, rng);
        CHECK(op_gradient_error({x, w, b}, [&](Tape& t) { return dense(t, x, w, b); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return relu(t, x); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return sigmoid(t, x); }, rng) < kTolerance);
        CHECK(op_gradient_error({x, y}, [&](Tape& t) { return add(t, x, y); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return scale(t, x, -2.5); }, rng) < kTolerance);
    }
}

TEST_CASE("gradient check: maxpool, reshape, flatten, upsample, crop/pad") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(400 + seed);
        auto x = testing::random_tensor<double>({2, 7, 11, 3}, rng);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return max_pool2d(t, x, 3); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return flatten(t, x); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return reshape(t, x, {2, 77, 3}); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return upsample_nearest(t, x, 2); }, rng) < kTolerance);
        CHECK(op_gradient_error({x}, [&](Tape& t) { return crop_or_pad(t, x, 5, 13); }, rng) < kTolerance);
    }
}

TEST_CASE("gradient check: dropout with a fixed mask") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(500 + seed);
        auto x = testing::random_tensor<double>({3, 4, 4, 2}, rng);
        const auto f = [&](Tape& t) {
            Rng mask(seed);
            return dropout(t, x, 0.5, mask, Mode::Train);
        };
        CHECK(op_gradient_error({x}, f, rng) < kTolerance);
    }
}

TEST_CASE("gradient check: losses and reparameterization") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(600 + seed);
        auto logits = testing::random_tensor<double>({5, 4}, rng, 2.0);
        const std::vector<std::size_t> labels = {0, 3, 1, 1, 2};
        const T64 targets = one_hot<double>(labels, 4);
        const std::vector<double> w = {0.5, 2.0, 1.0, 3.0, 0.25};
        CHECK(op_gradient_error({logits}, [&](Tape& t) { return softmax_cross_entropy(t, logits, targets); }, rng) <
              kTolerance);
        CHECK(op_gradient_error(
                  {logits}, [&](Tape& t) { return softmax_cross_entropy(t, logits, targets, std::span<const double>(w)); },
                  rng) < kTolerance);

        auto x = testing::random_tensor<double>({2, 3, 3, 1}, rng);
        auto r = testing::random_tensor<double>({2, 3, 3, 1}, rng);
        CHECK(op_gradient_error({x, r}, [&](Tape& t) { return sse_loss(t, x, r); }, rng) < kTolerance);

        auto mu = testing::random_tensor<double>({3, 4}, rng);
        auto lv = testing::random_tensor<double>({3, 4}, rng, 0.5);
        CHECK(op_gradient_error({mu, lv}, [&](Tape& t) { return kl_to_standard_normal(t, mu, lv); }, rng) <
              kTolerance);
        const auto reparam = [&](Tape& t) {
            Rng eps(seed);
            return reparameterize(t, mu, lv, eps);
        };
        CHECK(op_gradient_error({mu, lv}, reparam, rng) < kTolerance);
    }
}

TEST_CASE("softmax cross-entropy values") {
    Tape tape(false);
    const T64 logits({2, 3}, {0.0, 0.0, 0.0, 1.0, 2.0, 3.0});
    const std::vector<std::size_t> labels = {1, 2};
    const T64 targets = one_hot<double>(labels, 3);
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    const double expected = (std::log(3.0) + (lse - 3.0)) / 2.0;
    CHECK(softmax_cross_entropy(tape, logits, targets).item() == doctest::Approx(expected).epsilon(1e-12));

    // Uniform weight c scales the loss by exactly c.
    const std::vector<double> c = {2.5, 2.5};
    CHECK(softmax_cross_entropy(tape, logits, targets, std::span<const double>(c)).item() ==
          doctest::Approx(2.5 * expected).epsilon(1e-12));

    const T64 not_one_hot({2, 3}, {0.5, 0.5, 0, 0, 0, 1});
    CHECK_THROWS_AS(softmax_cross_entropy(tape, logits, not_one_hot), UsageError);
    const std::vector<std::size_t> bad = {3};
    CHECK_THROWS_AS(one_hot<double>(bad, 3), UsageError);

    const T64 p = softmax(logits);
    CHECK(p.data()[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p.data()[3] + p.data()[4] + p.data()[5] == doctest::Approx(1.0));
}

TEST_CASE("batchnorm statistics and inference") {
    Tape tape(false);
    Rng rng(7);
    auto x = testing::random_tensor<double>({8, 2, 2, 1}, rng, 3.0, false);
    T64 g({1}, std::vector<double>{1.0}), b({1}, std::vector<double>{0.0});
    BatchNormStats<double> stats;
    CHECK_THROWS_AS(batch_norm(tape, x, g, b, stats, Mode::Infer), UsageError);
    const T64 y = batch_norm(tape, x, g, b, stats, Mode::Train);
    double mean = 0.0, var = 0.0;
    for (double v : y.data()) mean += v;
    mean /= 32.0;
    for (double v : y.data()) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var / 32.0 == doctest::Approx(1.0).epsilon(1e-4));
    REQUIRE(stats.initialized);

    // Infer mode with the stats of the same batch reproduces train mode.
    const T64 z = batch_norm(tape, x, g, b, stats, Mode::Infer);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-9));
}

TEST_CASE("dropout scaling and inference identity") {
    Tape tape(false);
    T64 x({1, 100, 100, 1}, std::vector<double>(10000, 1.0));
    Rng rng(3);
    const T64 y = dropout(tape, x, 0.5, rng, Mode::Train);
    std::size_t kept = 0;
    for (double v : y.data()) {
        CHECK((v == 0.0 || v == 2.0));
        kept += v != 0.0;
    }
    CHECK(std::abs(static_cast<double>(kept) - 5000.0) < 300.0);
    CHECK(dropout(tape, x, 0.5, rng, Mode::Infer).same_storage(x));
    CHECK_THROWS_AS(dropout(tape, x, 1.0, rng, Mode::Train), UsageError);
}

TEST_CASE("maxpool drops the remainder and routes ties to the first index") {
    Tape tape;
    T64 x({1, 3, 5, 1}, std::vector<double>(15, 1.0), true);
    T64 y = max_pool2d(tape, x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 1});
    T64 s = reshape(tape, y, {1, 2});
    T64 w({2, 1}, {1.0, 1.0}), b({1});
    T64 loss = reshape(tape, dense(tape, s, w, b), {1});
    backward(tape, loss);
    const auto g = x.grad();
    CHECK(g[0] == 1.0);
    CHECK(g[2] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[5] == 0.0);
}

TEST_CASE("gradients accumulate across uses of one tensor") {
    Tape tape;
    T64 x({1}, {3.0}, true);
    T64 y = add(tape, x, x);
    backward(tape, y);
    CHECK(x.grad()[0] == 2.0);
    CHECK(tape.size() == 0);
    T64 not_scalar({2});
    CHECK_THROWS_AS(backward(tape, not_scalar), UsageError);
}

TEST_CASE("adam matches the closed-form first steps") {
    T64 p({2}, {1.0, -2.0}, true);
    std::vector<T64> params = {p};
    AdamState<double> state;
    state.config.lr = 0.1;
    const double g0[2] = {0.5, -3.0};
    p.grad()[0] = g0[0];
    p.grad()[1] = g0[1];
    adam_step<double>(params, state);
    // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    for (int i = 0; i < 2; ++i) {
        const double expected = (i == 0 ? 1.0 : -2.0) - 0.1 * g0[i] / (std::abs(g0[i]) + 1e-8);
        CHECK(p.data()[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    // Step 2 with gradient 1.0 on the first entry.
    zero_grads<double>(params);
    p.grad()[0] = 1.0;
    const double before = p.data()[0];
    adam_step<double>(params, state);
    const double m = 0.9 * 0.1 * 0.5 + 0.1 * 1.0;
    const double v = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
    const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
    CHECK(p.data()[0] == doctest::Approx(before - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
    CHECK(state.t == 2);
}

TEST_CASE("adam converges on a quadratic") {
    T64 p({3}, {5.0, -4.0, 2.0}, true);
    std::vector<T64> params = {p};
    AdamState<double> state;
    state.config.lr = 0.05;
    for (int step = 0; step < 2000; ++step) {
        zero_grads<double>(params);
        for (std::size_t i = 0; i < 3; ++i) p.grad()[i] = 2.0 * (p.data()[i] - static_cast<double>(i));
        adam_step<double>(params, state);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.data()[i] == doctest::Approx(static_cast<double>(i)).epsilon(1e-3));
}

TEST_CASE("glorot init stays within its limit") {
    Rng rng(1);
    const auto w = glorot_uniform<float>({30, 20}, 30, 20, rng);
    const double limit = std::sqrt(6.0 / 50.0);
    for (float v : w.data()) CHECK(std::abs(v) <= limit);
    CHECK(w.requires_grad());
}

TEST_CASE("PMDL checkpoint round-trip and errors") {
    Rng rng(9);
    const auto a = testing::random_tensor<float>({3, 3, 1, 10}, rng);
    const auto b = testing::random_tensor<float>({10}, rng);
    const std::vector<NamedArray> entries = {to_named("conv.kernel", a), to_named("conv.bias", b)};
    testing::TempDir dir;
    write_checkpoint(entries, dir / "m.pmdl");
    const auto back = read_checkpoint(dir / "m.pmdl");
    CHECK(back == entries);
    CHECK(find_entry(back, "conv.bias", 10).shape == Shape{10});
    CHECK_THROWS_AS(find_entry(back, "conv.bias", 11), DataError);
    CHECK_THROWS_AS(find_entry(back, "missing", 1), DataError);

    auto bytes = encode_checkpoint(entries);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PMDL");
    CHECK(bytes[4] == 0x01);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(bytes), DataError);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), DataError);
}
