#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pulmo/rng.hpp"
#include "pulmo/tensor.hpp"

// Differentiable layers. Every op records a backward closure on the tape
// when at least one input requires a gradient. Reductions accumulate in
// double regardless of T.
namespace pulmo::nn {

enum class Mode { Train, Infer };

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation. x: (N,H,W,Cin), kernels: (k,k,Cin,Cout), bias: (Cout).
/// Output (N, (H+2p-k)/s+1, (W+2p-k)/s+1, Cout). Zero padding.
template <typename T>
Tensor<T> conv2d(Tape& tape, const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Conv2dOptions options = {});

template <typename T>
struct BatchNormStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    bool initialized = false;
};

struct BatchNormOptions {
    double momentum = 0.9;
    double eps = 1e-5;
};

/// Per-channel normalization over every axis but the last. Train mode uses
/// batch statistics and updates `stats` (EMA, first step copies the batch
/// statistics); infer mode uses `stats` and throws UsageError if they were
/// never initialized.
template <typename T>
Tensor<T> batch_norm(Tape& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, Mode mode, BatchNormOptions options = {});

template <typename T>
Tensor<T> relu(Tape& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Tape& tape, const Tensor<T>& x);

/// Inverted dropout: train mode zeroes with probability p and scales the
/// survivors by 1/(1-p); infer mode is the identity. Requires 0 <= p < 1.
template <typename T>
Tensor<T> dropout(Tape& tape, const Tensor<T>& x, double p, Rng& rng, Mode mode);

/// Non-overlapping max pooling with window = stride = s over (N,H,W,C).
/// Remainder rows/columns are dropped; ties route to the first index.
template <typename T>
Tensor<T> max_pool2d(Tape& tape, const Tensor<T>& x, std::size_t s);

template <typename T>
Tensor<T> reshape(Tape& tape, const Tensor<T>& x, Shape shape);

/// (N, ...) -> (N, prod(...)).
template <typename T>
Tensor<T> flatten(Tape& tape, const Tensor<T>& x);

/// x: (N,F), weights: (F,O), bias: (O) -> (N,O).
template <typename T>
Tensor<T> dense(Tape& tape, const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

/// Nearest-neighbour upsampling of (N,H,W,C) by an integer factor.
template <typename T>
Tensor<T> upsample_nearest(Tape& tape, const Tensor<T>& x, std::size_t factor);

/// Crops or zero-pads (bottom/right) the spatial extent of (N,H,W,C).
template <typename T>
Tensor<T> crop_or_pad(Tape& tape, const Tensor<T>& x, std::size_t height, std::size_t width);

template <typename T>
Tensor<T> add(Tape& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape& tape, const Tensor<T>& a, double factor);

/// Row-wise softmax of (N,K); not differentiable (inference helper).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// mean_i weight_i * -log softmax(logits_i)[true_i]. one_hot: (N,K) rows
/// that are exact indicators (UsageError otherwise). weights: N entries,
/// or empty for all ones.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape& tape, const Tensor<T>& logits, const Tensor<T>& one_hot,
                                std::span<const T> weights = {});

/// Sum of squared differences; both sides may carry gradients.
template <typename T>
Tensor<T> sse_loss(Tape& tape, const Tensor<T>& x, const Tensor<T>& reconstruction);

/// Sum over all entries of 0.5 (exp(logvar) + mu^2 - 1 - logvar): the KL
/// divergence from N(mu, exp(logvar)) to N(0, 1), per dimension, summed.
template <typename T>
Tensor<T> kl_to_standard_normal(Tape& tape, const Tensor<T>& mu, const Tensor<T>& logvar);

/// z = mu + exp(logvar/2) * eps, eps ~ N(0, I) drawn from rng in row-major order.
template <typename T>
Tensor<T> reparameterize(Tape& tape, const Tensor<T>& mu, const Tensor<T>& logvar, Rng& rng);

/// One-hot (N,K) from labels; UsageError when a label is >= K.
template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes);

/// Fan-in/fan-out scaled uniform initialization, limit sqrt(6/(fan_in+fan_out)).
template <typename T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace pulmo::nn
