#include "pulmo/vae.hpp"

#include <algorithm>
#include <numeric>

namespace pulmo::vae {

using nn::Mode;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

namespace {

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

template <typename T>
Tensor<T> filled(Shape shape, T value) {
    std::vector<T> v(nn::numel(shape), value);
    return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> conv_kernel(std::size_t cin, std::size_t cout, Rng& rng) {
    return nn::glorot_uniform<T>({3, 3, cin, cout}, 9 * cin, 9 * cout, rng);
}

template <typename T>
Tensor<T> dense_weights(std::size_t in, std::size_t out, Rng& rng) {
    return nn::glorot_uniform<T>({in, out}, in, out, rng);
}

}  // namespace

template <typename T>
VaeModel<T>::VaeModel(const Architecture& arch, Rng& init) : arch_(arch) {
    if (arch.rows < 1 || arch.cols < 1 || arch.latent < 1 || arch.hidden < 1)
        throw UsageError("VaeModel: empty architecture");
    h1_ = half_up(arch.rows);
    w1_ = half_up(arch.cols);
    h2_ = half_up(h1_);
    w2_ = half_up(w1_);
    const std::size_t c1 = arch.channels1, c2 = arch.channels2;
    const std::size_t flat = h2_ * w2_ * c2;

    conv1_k_ = conv_kernel<T>(1, c1, init);
    conv1_b_ = Tensor<T>({c1}, true);
    bn1_g_ = filled<T>({c1}, T(1));
    bn1_b_ = Tensor<T>({c1}, true);
    conv2_k_ = conv_kernel<T>(c1, c2, init);
    conv2_b_ = Tensor<T>({c2}, true);
    bn2_g_ = filled<T>({c2}, T(1));
    bn2_b_ = Tensor<T>({c2}, true);
    enc_w_ = dense_weights<T>(flat, arch.hidden, init);
    enc_b_ = Tensor<T>({arch.hidden}, true);
    mu_w_ = dense_weights<T>(arch.hidden, arch.latent, init);
    mu_b_ = Tensor<T>({arch.latent}, true);
    lv_w_ = dense_weights<T>(arch.hidden, arch.latent, init);
    lv_b_ = Tensor<T>({arch.latent}, true);

    dec1_w_ = dense_weights<T>(arch.latent, arch.hidden, init);
    dec1_b_ = Tensor<T>({arch.hidden}, true);
    dec2_w_ = dense_weights<T>(arch.hidden, flat, init);
    dec2_b_ = Tensor<T>({flat}, true);
    up1_k_ = conv_kernel<T>(c2, c1, init);
    up1_b_ = Tensor<T>({c1}, true);
    up2_k_ = conv_kernel<T>(c1, c1, init);
    up2_b_ = Tensor<T>({c1}, true);
    out_k_ = conv_kernel<T>(c1, 1, init);
    out_b_ = Tensor<T>({1}, true);
}

template <typename T>
Encoded<T> VaeModel<T>::encode(Tape& tape, const Tensor<T>& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != arch_.rows || x.dim(2) != arch_.cols || x.dim(3) != 1)
        throw UsageError("VaeModel::encode: expected (N," + std::to_string(arch_.rows) + "," +
                         std::to_string(arch_.cols) + ",1), got " + nn::to_string(x.shape()));
    const nn::Conv2dOptions down{2, 1};
    auto h = nn::conv2d(tape, x, conv1_k_, conv1_b_, down);
    h = nn::relu(tape, nn::batch_norm(tape, h, bn1_g_, bn1_b_, bn1_, mode));
    h = nn::conv2d(tape, h, conv2_k_, conv2_b_, down);
    h = nn::relu(tape, nn::batch_norm(tape, h, bn2_g_, bn2_b_, bn2_, mode));
    h = nn::relu(tape, nn::dense(tape, nn::flatten(tape, h), enc_w_, enc_b_));
    return {nn::dense(tape, h, mu_w_, mu_b_), nn::dense(tape, h, lv_w_, lv_b_)};
}

template <typename T>
Tensor<T> VaeModel<T>::decode(Tape& tape, const Tensor<T>& z) {
    if (z.rank() != 2 || z.dim(1) != arch_.latent)
        throw UsageError("VaeModel::decode: expected (N," + std::to_string(arch_.latent) + "), got " +
                         nn::to_string(z.shape()));
    const std::size_t n = z.dim(0);
    const nn::Conv2dOptions same{1, 1};
    auto h = nn::relu(tape, nn::dense(tape, z, dec1_w_, dec1_b_));
    h = nn::relu(tape, nn::dense(tape, h, dec2_w_, dec2_b_));
    h = nn::reshape(tape, h, Shape{n, h2_, w2_, arch_.channels2});
    h = nn::relu(tape, nn::conv2d(tape, nn::upsample_nearest(tape, h, 2), up1_k_, up1_b_, same));
    h = nn::upsample_nearest(tape, h, 2);
    h = nn::crop_or_pad(tape, h, arch_.rows, arch_.cols);
    h = nn::relu(tape, nn::conv2d(tape, h, up2_k_, up2_b_, same));
    return nn::sigmoid(tape, nn::conv2d(tape, h, out_k_, out_b_, same));
}

template <typename T>
std::vector<Tensor<T>> VaeModel<T>::encoder_parameters() const {
    return {conv1_k_, conv1_b_, bn1_g_, bn1_b_, conv2_k_, conv2_b_, bn2_g_, bn2_b_,
            enc_w_,   enc_b_,   mu_w_,  mu_b_,  lv_w_,    lv_b_};
}

template <typename T>
std::vector<Tensor<T>> VaeModel<T>::parameters() const {
    auto p = encoder_parameters();
    for (const auto& t : {dec1_w_, dec1_b_, dec2_w_, dec2_b_, up1_k_, up1_b_, up2_k_, up2_b_, out_k_, out_b_})
        p.push_back(t);
    return p;
}

namespace {

const std::vector<std::string>& parameter_names() {
    static const std::vector<std::string> names{
        "enc.conv1.kernel", "enc.conv1.bias", "enc.bn1.gamma", "enc.bn1.beta",  "enc.conv2.kernel",
        "enc.conv2.bias",   "enc.bn2.gamma",  "enc.bn2.beta",  "enc.dense.w",   "enc.dense.b",
        "enc.mu.w",         "enc.mu.b",       "enc.logvar.w",  "enc.logvar.b",  "dec.dense1.w",
        "dec.dense1.b",     "dec.dense2.w",   "dec.dense2.b",  "dec.conv1.kernel", "dec.conv1.bias",
        "dec.conv2.kernel", "dec.conv2.bias", "dec.out.kernel", "dec.out.bias"};
    return names;
}

}  // namespace

template <typename T>
std::vector<nn::NamedArray> VaeModel<T>::state() const {
    std::vector<nn::NamedArray> out;
    const auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(nn::to_named(parameter_names()[i], params[i]));
    if (trained()) {
        out.push_back(nn::to_named<T>("enc.bn1.running_mean", bn1_.running_mean));
        out.push_back(nn::to_named<T>("enc.bn1.running_var", bn1_.running_var));
        out.push_back(nn::to_named<T>("enc.bn2.running_mean", bn2_.running_mean));
        out.push_back(nn::to_named<T>("enc.bn2.running_var", bn2_.running_var));
    }
    return out;
}

template <typename T>
void VaeModel<T>::load_state(std::span<const nn::NamedArray> entries) {
    auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = nn::find_entry(entries, parameter_names()[i], params[i].size());
        std::copy(e.values.begin(), e.values.end(), params[i].data().begin());
    }
    auto load_stats = [&](nn::BatchNormStats<T>& stats, const std::string& prefix, std::size_t c) {
        const bool present = std::any_of(entries.begin(), entries.end(),
                                         [&](const auto& e) { return e.name == prefix + ".running_mean"; });
        if (!present) return;
        const auto& m = nn::find_entry(entries, prefix + ".running_mean", c);
        const auto& v = nn::find_entry(entries, prefix + ".running_var", c);
        stats.running_mean.assign(m.values.begin(), m.values.end());
        stats.running_var.assign(v.values.begin(), v.values.end());
        stats.initialized = true;
    };
    load_stats(bn1_, "enc.bn1", arch_.channels1);
    load_stats(bn2_, "enc.bn2", arch_.channels2);
}

template <typename T>
Tensor<T> vae_loss(Tape& tape, const Tensor<T>& x, const Tensor<T>& reconstruction, const Encoded<T>& code,
                   double kl_weight) {
    if (kl_weight < 0.0) throw UsageError("vae_loss: kl_weight must be >= 0");
    const auto rec = nn::sse_loss(tape, x, reconstruction);
    if (kl_weight == 0.0) return rec;
    return nn::add(tape, rec, nn::scale(tape, nn::kl_to_standard_normal(tape, code.mu, code.logvar), kl_weight));
}

template <typename T>
Tensor<T> batch_loss(Tape& tape, VaeModel<T>& model, const Tensor<T>& x, Rng& noise, double kl_weight) {
    const auto code = model.encode(tape, x, Mode::Train);
    const auto z = nn::reparameterize(tape, code.mu, code.logvar, noise);
    const auto rec = model.decode(tape, z);
    return nn::scale(tape, vae_loss(tape, x, rec, code, kl_weight), 1.0 / static_cast<double>(x.dim(0)));
}

TrainResult train_vae(std::span<const std::span<const float>> samples, std::size_t rows, std::size_t cols,
                      const TrainConfig& config) {
    if (samples.size() < 2) throw UsageError("train_vae: need at least 2 samples of the class");
    if (config.epochs < 1 || config.batch_size < 1) throw UsageError("train_vae: epochs and batch_size must be >= 1");
    for (const auto& s : samples)
        if (s.size() != rows * cols) throw UsageError("train_vae: sample size does not match rows*cols");

    Rng init = Rng::stream(config.seed, "vae-init");
    Rng order = Rng::stream(config.seed, "vae-order");
    Rng noise = Rng::stream(config.seed, "vae-noise");

    Architecture arch{rows, cols, 8, 16, config.hidden, config.latent_dim};
    TrainResult result{VaeModel<float>(arch, init), {}};
    auto params = result.model.parameters();
    nn::AdamState<float> adam;
    adam.config.lr = config.learning_rate;

    std::vector<std::size_t> index(samples.size());
    std::iota(index.begin(), index.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        order.shuffle(std::span<std::size_t>(index));
        double total = 0.0;
        for (std::size_t start = 0; start < index.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, index.size() - start);
            std::vector<float> batch;
            batch.reserve(n * rows * cols);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& s = samples[index[start + i]];
                batch.insert(batch.end(), s.begin(), s.end());
            }
            Tensor<float> x({n, rows, cols, 1}, std::move(batch));
            Tape tape;
            nn::zero_grads<float>(params);
            auto loss = batch_loss(tape, result.model, x, noise, config.kl_weight);
            total += static_cast<double>(loss.item()) * static_cast<double>(n);
            nn::backward(tape, loss);
            nn::adam_step<float>(params, adam);
        }
        result.history.push_back(total / static_cast<double>(samples.size()));
    }
    return result;
}

std::vector<std::vector<float>> generate(VaeModel<float>& model, std::size_t n, Rng& rng) {
    std::vector<std::vector<float>> out;
    if (n == 0) return out;
    const auto& arch = model.architecture();
    constexpr std::size_t kChunk = 32;
    out.reserve(n);
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t m = std::min(kChunk, n - start);
        std::vector<float> z(m * arch.latent);
        for (auto& v : z) v = static_cast<float>(rng.normal());
        Tape tape(false);
        const auto x = model.decode(tape, Tensor<float>({m, arch.latent}, std::move(z)));
        const auto v = x.data();
        const std::size_t per = arch.rows * arch.cols;
        for (std::size_t i = 0; i < m; ++i) out.emplace_back(v.begin() + i * per, v.begin() + (i + 1) * per);
    }
    return out;
}

ClassGenerator class_generator(const TrainConfig& config, std::size_t rows, std::size_t cols) {
    return [config, rows, cols](std::span<const Sample* const> originals, std::size_t n_new, std::size_t,
                                std::uint64_t seed) {
        std::vector<std::span<const float>> rows_view;
        for (const Sample* s : originals) rows_view.emplace_back(s->features);
        TrainConfig c = config;
        c.seed = seed;
        auto trained = train_vae(rows_view, rows, cols, c);
        Rng rng = Rng::stream(seed, "vae-sample");
        return generate(trained.model, n_new, rng);
    };
}

template class VaeModel<float>;
template class VaeModel<double>;
template Tensor<float> vae_loss(Tape&, const Tensor<float>&, const Tensor<float>&, const Encoded<float>&, double);
template Tensor<double> vae_loss(Tape&, const Tensor<double>&, const Tensor<double>&, const Encoded<double>&, double);
template Tensor<float> batch_loss(Tape&, VaeModel<float>&, const Tensor<float>&, Rng&, double);
template Tensor<double> batch_loss(Tape&, VaeModel<double>&, const Tensor<double>&, Rng&, double);

}  // namespace pulmo::vae
