#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pulmo/balance.hpp"
#include "pulmo/checkpoint.hpp"
#include "pulmo/cnn.hpp"
#include "pulmo/dataset.hpp"
#include "pulmo/metrics.hpp"
#include "pulmo/rng.hpp"
#include "pulmo/vae.hpp"

namespace pulmo::eval {

using Fold = std::vector<std::size_t>;

/// Partitions indices 0..n-1 into k folds. Stratified mode deals each
/// class's shuffled members round-robin, continuing the fold cursor across
/// classes, so per-class fold counts differ by at most one and fold sizes
/// by at most one. Throws UsageError when k < 2 or k > n.
std::vector<Fold> kfold_split(std::span<const std::size_t> labels, std::size_t k, bool stratified, Rng& rng);

/// Patient-disjoint variant: whole groups go to the currently smallest fold,
/// largest groups first.
std::vector<Fold> kfold_split_grouped(std::span<const int> groups, std::size_t k, Rng& rng);

/// Per-class holdout of round(fraction * n_c) members. Returns (kept, held).
std::pair<Fold, Fold> stratified_holdout(std::span<const std::size_t> labels, double fraction, Rng& rng);

enum class Configuration { Unbalanced, Weighted, Vae, Smote, Adasyn };
enum class Protocol { Default, Paper };
/// k-fold cross-validation, or a single stratified train/test holdout.
enum class Split { KFold, Holdout };

std::string_view to_string(Configuration c);
std::string_view to_string(Protocol p);
std::string_view to_string(Split s);
Split parse_split(std::string_view name);
Configuration configuration_from_method(OversampleMethod m);
OversampleMethod method_of(Configuration c);
Configuration parse_configuration(std::string_view name);
Protocol parse_protocol(std::string_view name);

/// Training/inference seam so the harness can run with any model.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual void fit(const LabeledDataset& training, const LabeledDataset& validation,
                     const std::optional<std::vector<double>>& class_weights) = 0;
    virtual std::size_t predict(std::span<const float> features) = 0;
    virtual std::string history_csv() const { return {}; }
    virtual std::vector<nn::NamedArray> checkpoint() const { return {}; }
};

using ClassifierFactory =
    std::function<std::unique_ptr<Classifier>(std::size_t rows, std::size_t cols, std::size_t classes, std::uint64_t seed)>;

/// The spectrogram CNN behind the Classifier seam. `base.seed` is replaced by the
/// seed handed to the factory.
ClassifierFactory cnn_factory(const cnn::TrainConfig& base, double dropout = 0.5);

struct ExperimentConfig {
    Configuration configuration = Configuration::Vae;
    Protocol protocol = Protocol::Default;
    Split split = Split::KFold;
    std::size_t folds = 10;
    double test_fraction = 0.2;  // holdout split only
    bool stratified = true;
    bool patient_disjoint = false;
    double validation_fraction = 0.1;
    std::vector<std::size_t> targets;  // empty = scheme defaults
    std::size_t k_neighbors = 5;
    vae::TrainConfig vae;
    cnn::TrainConfig cnn;
    double dropout = 0.5;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct FoldResult {
    std::size_t fold = 0;
    MetricsReport metrics;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
    std::size_t test_size = 0;
    std::size_t synthetic_in_train = 0;
    std::size_t leaked_parents = 0;  // test samples that are parents of training synthetics
    std::vector<std::size_t> test_indices;
    std::string history_csv;
    std::vector<nn::NamedArray> model;
};

struct ExperimentResult {
    Configuration configuration = Configuration::Unbalanced;
    Protocol protocol = Protocol::Default;
    Split split = Split::KFold;
    std::string scheme;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    std::vector<FoldResult> folds;
    MetricsReport mean;
    MetricsReport std;  // sample standard deviation (n - 1)
    double mean_accuracy = 0.0;
};

/// Mean and sample standard deviation of each metric.
std::pair<MetricsReport, MetricsReport> aggregate(std::span<const MetricsReport> reports);

/// k-fold evaluation of one configuration. Default protocol balances only the
/// training portion of each fold (after holding out a stratified validation
/// slice) and throws DataError if a training synthetic descends from a test
/// sample. Paper protocol balances the whole dataset first, then splits.
ExperimentResult run_experiment(const LabeledDataset& data, const ExperimentConfig& config,
                                const ClassifierFactory& factory);

ExperimentResult run_experiment(const LabeledDataset& data, const ExperimentConfig& config);

/// Keys: configuration, scheme, seed, protocol, split, std_kind, class_names,
/// folds (fold, six metrics, accuracy, sizes), mean, std, mean_accuracy.
std::string to_json(const ExperimentResult& result);
ExperimentResult from_json(std::string_view text);

/// Rows = metrics, columns = folds 1..k, Mean, Std.
std::string format_fold_table(const ExperimentResult& result);

}  // namespace pulmo::eval
