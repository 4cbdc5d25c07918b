#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulmo/checkpoint.hpp"
#include "pulmo/ops.hpp"
#include "pulmo/optim.hpp"
#include "pulmo/rng.hpp"

namespace pulmo::cnn {

/// Input -> Conv2D(3x3, 10, valid) -> BatchNorm -> ReLU -> Dropout
///       -> MaxPool(5, stride 5) -> Flatten -> Dense(100, relu) -> Dense(K)
struct Architecture {
    std::size_t rows = 128;
    std::size_t cols = 926;
    std::size_t n_classes = 3;
    std::size_t filters = 10;
    std::size_t kernel = 3;
    std::size_t pool = 5;
    std::size_t hidden = 100;
    double dropout = 0.5;
};

template <typename T>
class CnnModel {
public:
    /// Throws UsageError when the input is too small for the conv/pool chain.
    CnnModel(const Architecture& arch, Rng& init);

    const Architecture& architecture() const { return arch_; }

    /// Logits (N, K) for x of shape (N, rows, cols, 1). When `shapes` is
    /// given, the output shape of every layer is appended to it.
    nn::Tensor<T> forward(nn::Tape& tape, const nn::Tensor<T>& x, nn::Mode mode, Rng* dropout_rng = nullptr,
                          std::vector<nn::Shape>* shapes = nullptr);

    std::vector<nn::Tensor<T>> parameters() const;

    std::vector<nn::NamedArray> state() const;
    void load_state(std::span<const nn::NamedArray> entries);

    /// Batchnorm running statistics exist (at least one training step ran).
    bool trained() const { return bn_stats_.initialized; }

    CnnModel clone() const;

private:
    Architecture arch_;
    nn::Tensor<T> conv_k_, conv_b_, bn_g_, bn_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
    nn::BatchNormStats<T> bn_stats_;
};

/// Layer output shapes for a given input extent, without running the model:
/// conv, pool, flatten, hidden, output.
std::vector<nn::Shape> shape_chain(const Architecture& arch);

CnnModel<float> build_cnn(std::size_t n_classes, std::size_t rows, std::size_t cols, Rng& init);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::optional<std::vector<double>> class_weights;
    std::size_t patience = 10;  // 0 disables early stopping
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct History {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;

    /// `epoch,train_loss,train_acc,val_loss,val_acc` with a header row.
    std::string to_csv() const;
};

/// Flattened samples (rows*cols each) with labels < K.
struct Batch {
    std::vector<std::span<const float>> features;
    std::vector<std::size_t> labels;
};

/// Mini-batch Adam on (optionally class-weighted) categorical cross-entropy.
/// With a non-empty validation set, stops after `patience` epochs without a
/// validation-loss improvement and restores the best parameters.
History train(CnnModel<float>& model, const Batch& training, const Batch& validation, const TrainConfig& config);

struct Prediction {
    std::vector<double> probabilities;
    std::size_t label = 0;  // argmax, ties to the lowest index
};

/// Inference-mode prediction. Throws UsageError on a shape mismatch or an
/// untrained model.
Prediction predict(CnnModel<float>& model, std::span<const float> features);

/// Argmax with ties broken toward the lowest index.
std::size_t argmax(std::span<const double> values);

/// Mean (weighted) cross-entropy and accuracy in inference mode.
std::pair<double, double> evaluate_loss(CnnModel<float>& model, const Batch& data,
                                        const std::optional<std::vector<double>>& class_weights = std::nullopt);

}  // namespace pulmo::cnn
