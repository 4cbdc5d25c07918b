#include "pulmo/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace pulmo::cnn {

using nn::Mode;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

std::vector<Shape> shape_chain(const Architecture& arch) {
    if (arch.rows < arch.kernel || arch.cols < arch.kernel)
        throw UsageError("cnn: input " + std::to_string(arch.rows) + "x" + std::to_string(arch.cols) +
                         " is smaller than the convolution kernel");
    const std::size_t ch = arch.rows - arch.kernel + 1;
    const std::size_t cw = arch.cols - arch.kernel + 1;
    if (ch < arch.pool || cw < arch.pool)
        throw UsageError("cnn: input too small for the pooling window after convolution");
    const std::size_t ph = ch / arch.pool;
    const std::size_t pw = cw / arch.pool;
    return {{ch, cw, arch.filters},
            {ph, pw, arch.filters},
            {ph * pw * arch.filters},
            {arch.hidden},
            {arch.n_classes}};
}

template <typename T>
CnnModel<T>::CnnModel(const Architecture& arch, Rng& init) : arch_(arch) {
    if (arch.n_classes < 2) throw UsageError("cnn: need at least 2 classes");
    const auto chain = shape_chain(arch);
    const std::size_t flat = chain[2][0];
    const std::size_t k = arch.kernel, f = arch.filters;
    conv_k_ = nn::glorot_uniform<T>({k, k, 1, f}, k * k, k * k * f, init);
    conv_b_ = Tensor<T>({f}, true);
    bn_g_ = Tensor<T>({f}, std::vector<T>(f, T(1)), true);
    bn_b_ = Tensor<T>({f}, true);
    fc1_w_ = nn::glorot_uniform<T>({flat, arch.hidden}, flat, arch.hidden, init);
    fc1_b_ = Tensor<T>({arch.hidden}, true);
    fc2_w_ = nn::glorot_uniform<T>({arch.hidden, arch.n_classes}, arch.hidden, arch.n_classes, init);
    fc2_b_ = Tensor<T>({arch.n_classes}, true);
}

template <typename T>
Tensor<T> CnnModel<T>::forward(Tape& tape, const Tensor<T>& x, Mode mode, Rng* dropout_rng,
                               std::vector<Shape>* shapes) {
    if (x.rank() != 4 || x.dim(1) != arch_.rows || x.dim(2) != arch_.cols || x.dim(3) != 1)
        throw UsageError("cnn: expected input (N," + std::to_string(arch_.rows) + "," + std::to_string(arch_.cols) +
                         ",1), got " + nn::to_string(x.shape()));
    if (mode == Mode::Infer && !bn_stats_.initialized)
        throw UsageError("cnn: model was never trained (batchnorm statistics absent)");
    const auto record = [&](const Tensor<T>& t) {
        if (shapes) shapes->push_back(Shape(t.shape().begin() + 1, t.shape().end()));
    };

    auto h = nn::conv2d(tape, x, conv_k_, conv_b_);
    record(h);
    h = nn::batch_norm(tape, h, bn_g_, bn_b_, bn_stats_, mode);
    h = nn::relu(tape, h);
    if (mode == Mode::Train && arch_.dropout > 0.0) {
        if (!dropout_rng) throw UsageError("cnn: train mode with dropout needs an rng");
        h = nn::dropout(tape, h, arch_.dropout, *dropout_rng, mode);
    }
    h = nn::max_pool2d(tape, h, arch_.pool);
    record(h);
    h = nn::flatten(tape, h);
    record(h);
    h = nn::relu(tape, nn::dense(tape, h, fc1_w_, fc1_b_));
    record(h);
    h = nn::dense(tape, h, fc2_w_, fc2_b_);
    record(h);
    return h;
}

template <typename T>
std::vector<Tensor<T>> CnnModel<T>::parameters() const {
    return {conv_k_, conv_b_, bn_g_, bn_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_};
}

namespace {
const std::vector<std::string> kParamNames{"conv.kernel", "conv.bias", "bn.gamma", "bn.beta",
                                           "dense1.w",    "dense1.b",  "dense2.w", "dense2.b"};
}

template <typename T>
std::vector<nn::NamedArray> CnnModel<T>::state() const {
    std::vector<nn::NamedArray> out;
    const auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(nn::to_named(kParamNames[i], params[i]));
    if (bn_stats_.initialized) {
        out.push_back(nn::to_named<T>("bn.running_mean", bn_stats_.running_mean));
        out.push_back(nn::to_named<T>("bn.running_var", bn_stats_.running_var));
    }
    return out;
}

template <typename T>
void CnnModel<T>::load_state(std::span<const nn::NamedArray> entries) {
    auto params = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = nn::find_entry(entries, kParamNames[i], params[i].size());
        std::copy(e.values.begin(), e.values.end(), params[i].data().begin());
    }
    const bool has_stats =
        std::any_of(entries.begin(), entries.end(), [](const auto& e) { return e.name == "bn.running_mean"; });
    if (has_stats) {
        const auto& m = nn::find_entry(entries, "bn.running_mean", arch_.filters);
        const auto& v = nn::find_entry(entries, "bn.running_var", arch_.filters);
        bn_stats_.running_mean.assign(m.values.begin(), m.values.end());
        bn_stats_.running_var.assign(v.values.begin(), v.values.end());
        bn_stats_.initialized = true;
    }
}

template <typename T>
CnnModel<T> CnnModel<T>::clone() const {
    CnnModel copy = *this;
    copy.conv_k_ = conv_k_.clone();
    copy.conv_b_ = conv_b_.clone();
    copy.bn_g_ = bn_g_.clone();
    copy.bn_b_ = bn_b_.clone();
    copy.fc1_w_ = fc1_w_.clone();
    copy.fc1_b_ = fc1_b_.clone();
    copy.fc2_w_ = fc2_w_.clone();
    copy.fc2_b_ = fc2_b_.clone();
    for (auto* t : {&copy.conv_k_, &copy.conv_b_, &copy.bn_g_, &copy.bn_b_, &copy.fc1_w_, &copy.fc1_b_, &copy.fc2_w_,
                    &copy.fc2_b_})
        t->set_requires_grad(true);
    return copy;
}

template class CnnModel<float>;
template class CnnModel<double>;

CnnModel<float> build_cnn(std::size_t n_classes, std::size_t rows, std::size_t cols, Rng& init) {
    Architecture arch;
    arch.rows = rows;
    arch.cols = cols;
    arch.n_classes = n_classes;
    return CnnModel<float>(arch, init);
}

std::string History::to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    out << std::setprecision(9);
    for (const auto& e : epochs)
        out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << '\n';
    return out.str();
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

namespace {

void check_batch(const Batch& b, const Architecture& arch) {
    if (b.features.size() != b.labels.size()) throw UsageError("cnn: features/labels length mismatch");
    for (std::size_t i = 0; i < b.features.size(); ++i) {
        if (b.features[i].size() != arch.rows * arch.cols)
            throw UsageError("cnn: sample " + std::to_string(i) + " has " + std::to_string(b.features[i].size()) +
                             " values, model expects " + std::to_string(arch.rows * arch.cols));
        if (b.labels[i] >= arch.n_classes) throw UsageError("cnn: label out of range");
    }
}

Tensor<float> stack(const Batch& b, std::span<const std::size_t> idx, const Architecture& arch) {
    std::vector<float> values;
    values.reserve(idx.size() * arch.rows * arch.cols);
    for (std::size_t i : idx) values.insert(values.end(), b.features[i].begin(), b.features[i].end());
    return Tensor<float>({idx.size(), arch.rows, arch.cols, 1}, std::move(values));
}

std::vector<float> sample_weights(const Batch& b, std::span<const std::size_t> idx,
                                  const std::optional<std::vector<double>>& class_weights) {
    std::vector<float> w;
    if (!class_weights) return w;
    for (std::size_t i : idx) w.push_back(static_cast<float>(class_weights->at(b.labels[i])));
    return w;
}

}  // namespace

std::pair<double, double> evaluate_loss(CnnModel<float>& model, const Batch& data,
                                        const std::optional<std::vector<double>>& class_weights) {
    const auto& arch = model.architecture();
    check_batch(data, arch);
    if (data.features.empty()) return {0.0, 0.0};
    constexpr std::size_t kChunk = 64;
    double loss = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.features.size(); start += kChunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(start + kChunk, data.features.size()); ++i) idx.push_back(i);
        Tape tape(false);
        const auto logits = model.forward(tape, stack(data, idx, arch), Mode::Infer);
        std::vector<std::size_t> labels;
        for (std::size_t i : idx) labels.push_back(data.labels[i]);
        const auto w = sample_weights(data, idx, class_weights);
        const auto l = nn::softmax_cross_entropy<float>(tape, logits, nn::one_hot<float>(labels, arch.n_classes), w);
        loss += static_cast<double>(l.item()) * static_cast<double>(idx.size());
        const auto lv = logits.data();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::vector<double> row(lv.begin() + r * arch.n_classes, lv.begin() + (r + 1) * arch.n_classes);
            if (argmax(row) == labels[r]) ++correct;
        }
    }
    const double n = static_cast<double>(data.features.size());
    return {loss / n, static_cast<double>(correct) / n};
}

History train(CnnModel<float>& model, const Batch& training, const Batch& validation, const TrainConfig& config) {
    const auto& arch = model.architecture();
    if (training.features.empty()) throw UsageError("cnn::train: empty training set");
    if (config.epochs < 1 || config.batch_size < 1) throw UsageError("cnn::train: epochs and batch_size must be >= 1");
    if (config.class_weights && config.class_weights->size() != arch.n_classes)
        throw UsageError("cnn::train: class weight count mismatch");
    check_batch(training, arch);
    check_batch(validation, arch);

    Rng order = Rng::stream(config.seed, "cnn-order");
    Rng drop = Rng::stream(config.seed, "dropout");
    auto params = model.parameters();
    nn::AdamState<float> adam;
    adam.config.lr = config.learning_rate;

    History history;
    const bool early_stop = !validation.features.empty() && config.patience > 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<nn::NamedArray> best_state;
    std::size_t since_best = 0;

    std::vector<std::size_t> index(training.features.size());
    std::iota(index.begin(), index.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        order.shuffle(std::span<std::size_t>(index));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < index.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, index.size() - start);
            const std::span<const std::size_t> idx(index.data() + start, n);
            std::vector<std::size_t> labels;
            for (std::size_t i : idx) labels.push_back(training.labels[i]);
            const auto w = sample_weights(training, idx, config.class_weights);

            Tape tape;
            nn::zero_grads<float>(params);
            const auto logits = model.forward(tape, stack(training, idx, arch), Mode::Train, &drop);
            auto loss = nn::softmax_cross_entropy<float>(tape, logits, nn::one_hot<float>(labels, arch.n_classes), w);
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(n);
            const auto lv = logits.data();
            for (std::size_t r = 0; r < n; ++r) {
                std::vector<double> row(lv.begin() + r * arch.n_classes, lv.begin() + (r + 1) * arch.n_classes);
                if (argmax(row) == labels[r]) ++correct;
            }
            nn::backward(tape, loss);
            nn::adam_step<float>(params, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(index.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(index.size());
        if (!validation.features.empty()) std::tie(rec.val_loss, rec.val_acc) = evaluate_loss(model, validation);
        history.epochs.push_back(rec);

        if (early_stop) {
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                best_state = model.state();
                history.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if (early_stop && !best_state.empty()) model.load_state(best_state);
    return history;
}

Prediction predict(CnnModel<float>& model, std::span<const float> features) {
    const auto& arch = model.architecture();
    if (features.size() != arch.rows * arch.cols)
        throw UsageError("cnn::predict: got " + std::to_string(features.size()) + " values, model expects " +
                         std::to_string(arch.rows * arch.cols));
    Tape tape(false);
    const Tensor<float> x({1, arch.rows, arch.cols, 1}, std::vector<float>(features.begin(), features.end()));
    const auto logits = model.forward(tape, x, Mode::Infer);
    const auto lv = logits.data();
    // Softmax in double so the probabilities sum to 1 tightly.
    const double mx = *std::max_element(lv.begin(), lv.end());
    Prediction p;
    double sum = 0.0;
    for (float v : lv) {
        p.probabilities.push_back(std::exp(static_cast<double>(v) - mx));
        sum += p.probabilities.back();
    }
    for (double& v : p.probabilities) v /= sum;
    p.label = argmax(p.probabilities);
    return p;
}

}  // namespace pulmo::cnn
