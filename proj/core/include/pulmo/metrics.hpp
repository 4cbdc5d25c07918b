#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pulmo::eval {

/// counts[true][predicted].
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}

    std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * classes + predicted]; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
    std::size_t row_total(std::size_t truth) const;
    std::size_t column_total(std::size_t predicted) const;
    std::size_t total() const;

    /// K lines of K comma-separated integers.
    std::string to_csv() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws UsageError on length mismatch or a label >= k.
ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                          std::size_t k);

/// Healthy is the positive class for precision/recall/F-score, so recall
/// equals specificity. Any 0/0 ratio is 0.
struct MetricsReport {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double score = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;

    bool operator==(const MetricsReport&) const = default;
};

inline constexpr const char* kMetricNames[6] = {"Sensitivity", "Specificity", "Score", "Precision", "Recall", "F-Score"};

/// Metrics for any class count given the index of the healthy class:
/// sensitivity = correct disease predictions / disease samples.
MetricsReport healthy_positive_metrics(const ConfusionMatrix& cm, std::size_t healthy_index);

/// 3x3 in the order chronic, non-chronic, healthy.
MetricsReport ternary_metrics(const ConfusionMatrix& cm);

/// 6x6 in the order COPD, pneumonia, healthy, URTI, bronchiectasis, bronchiolitis.
MetricsReport pathology_metrics(const ConfusionMatrix& cm);

std::vector<double> as_vector(const MetricsReport& m);

double accuracy(const ConfusionMatrix& cm);

}  // namespace pulmo::eval
