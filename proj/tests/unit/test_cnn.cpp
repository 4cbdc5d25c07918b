#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pulmo/cnn.hpp"
#include "pulmo/error.hpp"
#include "support.hpp"

using namespace pulmo;
using namespace pulmo::nn;
using namespace pulmo::cnn;

namespace {

struct Owned {
    std::vector<std::vector<float>> rows;
    Batch batch;
};

Owned as_batch(const LabeledDataset& d) {
    Owned o;
    for (const auto& s : d.samples) {
        o.rows.push_back(s.features);
        o.batch.labels.push_back(s.label);
    }
    for (const auto& r : o.rows) o.batch.features.emplace_back(r);
    return o;
}

Architecture small(std::size_t rows, std::size_t cols) {
    Architecture a;
    a.rows = rows;
    a.cols = cols;
    a.filters = 4;
    a.pool = 2;
    a.hidden = 16;
    return a;
}

}  // namespace

TEST_CASE("layer shapes for a full-size spectrogram") {
    Architecture arch;
    arch.rows = 128;
    arch.cols = 926;
    const auto chain = shape_chain(arch);
    REQUIRE(chain.size() == 5);
    CHECK(chain[0] == Shape{126, 924, 10});
    CHECK(chain[1] == Shape{25, 184, 10});
    CHECK(chain[2] == Shape{46000});
    CHECK(chain[3] == Shape{100});
    CHECK(chain[4] == Shape{3});

    // The running model reports the same chain.
    Architecture tiny = small(12, 17);
    tiny.n_classes = 6;
    Rng init(1);
    CnnModel<float> model(tiny, init);
    Tape tape(false);
    Rng drop(2);
    std::vector<Shape> seen;
    model.forward(tape, testing::random_tensor<float>({2, 12, 17, 1}, init, 1.0, false), Mode::Train, &drop, &seen);
    CHECK(seen == shape_chain(tiny));

    Architecture too_small = small(3, 40);
    CHECK_THROWS_AS(shape_chain(too_small), UsageError);
    CHECK_THROWS_AS(build_cnn(3, 2, 2, init), UsageError);
}

TEST_CASE("gradient check: full classifier with dropout") {
    for (int seed = 0; seed < 10; ++seed) {
        Rng init(500 + seed);
        Architecture arch = small(7, 9);
        arch.hidden = 6;
        CnnModel<double> model(arch, init);
        auto params = model.parameters();
        // Zero-initialized biases put hidden units exactly on the relu kink.
        for (auto& p : params) {
            for (auto& v : p.data()) v += 0.1 * init.normal();
            p.zero_grad();
        }
        const auto x = testing::random_tensor<double>({4, 7, 9, 1}, init, 1.0, false);
        const std::vector<std::size_t> labels = {0, 2, 1, 2};
        const auto targets = one_hot<double>(labels, 3);
        const std::vector<double> weights = {0.5, 2.0, 1.0, 2.0};
        const auto loss_on = [&](Tape& t) {
            Rng drop(600 + seed);  // same dropout mask on every evaluation
            return softmax_cross_entropy<double>(t, model.forward(t, x, Mode::Train, &drop), targets, weights);
        };
        Tape tape;
        auto loss = loss_on(tape);
        backward(tape, loss);
        CHECK(testing::max_gradient_error(params, [&] {
                  Tape t(false);
                  return loss_on(t).item();
              }) < 1e-6);
    }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
    CHECK(argmax(std::vector<double>{1.0, 1.0, 1.0}) == 0);
    CHECK(argmax(std::vector<double>{-1.0, -3.0, 5.0}) == 2);
}

TEST_CASE("untrained models refuse inference") {
    Rng init(3);
    auto model = build_cnn(3, 8, 8, init);
    const std::vector<float> x(64, 0.5f);
    CHECK_THROWS_AS(predict(model, x), UsageError);
    CHECK_THROWS_AS(predict(model, std::span(x).first(10)), UsageError);
}

TEST_CASE("training separates a toy set and checkpoints round-trip") {
    const auto train_set = testing::toy_dataset({16, 16, 16}, 12, 16, 7);
    const auto val_set = testing::toy_dataset({4, 4, 4}, 12, 16, 8);
    auto tr = as_batch(train_set), va = as_batch(val_set);
    Rng init(4);
    CnnModel<float> model(small(12, 16), init);
    TrainConfig config;
    config.epochs = 15;
    config.batch_size = 8;
    config.seed = 5;
    const auto history = train(model, tr.batch, va.batch, config);
    CHECK(history.epochs.back().train_acc >= 0.95);
    const auto [val_loss, val_acc] = evaluate_loss(model, va.batch);
    CHECK(val_acc == 1.0);

    for (std::size_t i = 0; i < va.rows.size(); ++i) {
        const auto p = predict(model, va.rows[i]);
        CHECK(p.label == va.batch.labels[i]);
        double sum = 0.0;
        for (double v : p.probabilities) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }

    Rng other(99);
    CnnModel<float> restored(small(12, 16), other);
    restored.load_state(model.state());
    CHECK(restored.trained());
    for (std::size_t i = 0; i < va.rows.size(); ++i)
        CHECK(predict(restored, va.rows[i]).probabilities == predict(model, va.rows[i]).probabilities);

    const auto csv = history.to_csv();
    CHECK(csv.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == history.epochs.size() + 1);

    // Same seed, same run.
    Rng init2(4);
    CnnModel<float> twin(small(12, 16), init2);
    const auto again = train(twin, tr.batch, va.batch, config);
    REQUIRE(again.epochs.size() == history.epochs.size());
    for (std::size_t e = 0; e < again.epochs.size(); ++e)
        CHECK(again.epochs[e].train_loss == history.epochs[e].train_loss);
}

TEST_CASE("early stopping restores the best validation weights") {
    const auto train_set = testing::toy_dataset({10, 10, 10}, 12, 16, 9);
    auto tr = as_batch(train_set);
    // Validation labels are rotated so fitting the training set makes it worse.
    auto va = as_batch(testing::toy_dataset({5, 5, 5}, 12, 16, 10));
    for (auto& l : va.batch.labels) l = (l + 1) % 3;
    Rng init(6);
    CnnModel<float> model(small(12, 16), init);
    TrainConfig config;
    config.epochs = 40;
    config.batch_size = 8;
    config.patience = 3;
    config.seed = 11;
    const auto history = train(model, tr.batch, va.batch, config);
    CHECK(history.epochs.size() < 40);
    const auto best = std::min_element(history.epochs.begin(), history.epochs.end(),
                                       [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    CHECK(history.best_epoch == best->epoch);
    CHECK(history.epochs.size() == history.best_epoch + config.patience);
    CHECK(evaluate_loss(model, va.batch).first == doctest::Approx(best->val_loss).epsilon(1e-12));
}

TEST_CASE("uniform class weights scale the loss") {
    auto data = as_batch(testing::toy_dataset({3, 3, 3}, 12, 16, 12));
    Rng init(7);
    CnnModel<float> model(small(12, 16), init);
    TrainConfig config;
    config.epochs = 1;
    train(model, data.batch, {}, config);
    const double plain = evaluate_loss(model, data.batch).first;
    const double scaled = evaluate_loss(model, data.batch, std::vector<double>{2.5, 2.5, 2.5}).first;
    CHECK(scaled == doctest::Approx(2.5 * plain).epsilon(1e-6));

    config.class_weights = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_AS(train(model, data.batch, {}, config), UsageError);
    data.batch.labels[0] = 3;
    config.class_weights.reset();
    CHECK_THROWS_AS(train(model, data.batch, {}, config), UsageError);
}
