#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pulmo/balance.hpp"
#include "pulmo/checkpoint.hpp"
#include "pulmo/ops.hpp"
#include "pulmo/optim.hpp"
#include "pulmo/rng.hpp"

namespace pulmo::vae {

/// Encoder: two 3x3 stride-2 convolutions (padding 1) each followed by
/// batchnorm + relu, flatten, dense(hidden) + relu, then parallel dense
/// heads for mu and logvar. Decoder mirrors it: dense(hidden) + relu,
/// dense + relu, reshape, (upsample x2, 3x3 conv, relu) twice, crop/pad to
/// the input extent, and a final single-channel 3x3 conv with a sigmoid.
struct Architecture {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels1 = 8;
    std::size_t channels2 = 16;
    std::size_t hidden = 128;
    std::size_t latent = 64;
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::size_t hidden = 128;
    std::size_t latent_dim = 64;
    double kl_weight = 1.0;
    std::uint64_t seed = 0;
};

template <typename T>
struct Encoded {
    nn::Tensor<T> mu;
    nn::Tensor<T> logvar;
};

template <typename T>
class VaeModel {
public:
    VaeModel(const Architecture& arch, Rng& init);

    const Architecture& architecture() const { return arch_; }

    /// x: (N, rows, cols, 1) with values in [0, 1].
    Encoded<T> encode(nn::Tape& tape, const nn::Tensor<T>& x, nn::Mode mode);

    /// z: (N, latent) -> (N, rows, cols, 1) in (0, 1).
    nn::Tensor<T> decode(nn::Tape& tape, const nn::Tensor<T>& z);

    std::vector<nn::Tensor<T>> parameters() const;
    std::vector<nn::Tensor<T>> encoder_parameters() const;

    std::vector<nn::NamedArray> state() const;
    void load_state(std::span<const nn::NamedArray> entries);

    /// True once encode ran in train mode (batchnorm statistics exist).
    bool trained() const { return bn1_.initialized && bn2_.initialized; }

private:
    Architecture arch_;
    std::size_t h1_, w1_, h2_, w2_;
    nn::Tensor<T> conv1_k_, conv1_b_, bn1_g_, bn1_b_;
    nn::Tensor<T> conv2_k_, conv2_b_, bn2_g_, bn2_b_;
    nn::Tensor<T> enc_w_, enc_b_, mu_w_, mu_b_, lv_w_, lv_b_;
    nn::Tensor<T> dec1_w_, dec1_b_, dec2_w_, dec2_b_;
    nn::Tensor<T> up1_k_, up1_b_, up2_k_, up2_b_, out_k_, out_b_;
    nn::BatchNormStats<T> bn1_, bn2_;
};

/// Per-sample loss ||x - x_hat||^2 + kl_weight * KL, summed over the batch.
template <typename T>
nn::Tensor<T> vae_loss(nn::Tape& tape, const nn::Tensor<T>& x, const nn::Tensor<T>& reconstruction,
                       const Encoded<T>& code, double kl_weight);

/// Full training forward pass for a batch: encode (train mode),
/// reparameterize with `noise`, decode, loss divided by the batch size.
template <typename T>
nn::Tensor<T> batch_loss(nn::Tape& tape, VaeModel<T>& model, const nn::Tensor<T>& x, Rng& noise, double kl_weight);

struct TrainResult {
    VaeModel<float> model;
    std::vector<double> history;  // mean per-sample loss for each epoch
};

/// Trains one VAE with Adam on samples of a single class (each rows*cols,
/// row-major). Throws UsageError with fewer than 2 samples.
TrainResult train_vae(std::span<const std::span<const float>> samples, std::size_t rows, std::size_t cols,
                      const TrainConfig& config);

/// Decodes n draws z ~ N(0, I). Outputs are rows*cols values in [0, 1].
std::vector<std::vector<float>> generate(VaeModel<float>& model, std::size_t n, Rng& rng);

/// Oversampling hook for apply_plan: fits one VAE on the class originals
/// (config.seed replaced by the per-class seed) and decodes n_new samples.
ClassGenerator class_generator(const TrainConfig& config, std::size_t rows, std::size_t cols);

}  // namespace pulmo::vae
