#include "pulmo/metrics.hpp"

#include <sstream>

#include "pulmo/error.hpp"

namespace pulmo::eval {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < classes; ++p) s += at(truth, p);
    return s;
}

std::size_t ConfusionMatrix::column_total(std::size_t predicted) const {
    std::size_t s = 0;
    for (std::size_t t = 0; t < classes; ++t) s += at(t, predicted);
    return s;
}

std::size_t ConfusionMatrix::total() const {
    std::size_t s = 0;
    for (std::size_t c : counts) s += c;
    return s;
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream out;
    for (std::size_t t = 0; t < classes; ++t) {
        for (std::size_t p = 0; p < classes; ++p) out << (p ? "," : "") << at(t, p);
        out << '\n';
    }
    return out.str();
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                          std::size_t k) {
    if (predictions.size() != truths.size()) throw UsageError("confusion: predictions/truths length mismatch");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] >= k || predictions[i] >= k)
            throw UsageError("confusion: label out of range at index " + std::to_string(i));
        ++cm.at(truths[i], predictions[i]);
    }
    return cm;
}

MetricsReport healthy_positive_metrics(const ConfusionMatrix& cm, std::size_t healthy_index) {
    if (healthy_index >= cm.classes) throw UsageError("metrics: healthy index out of range");
    double correct_disease = 0.0, total_disease = 0.0;
    for (std::size_t c = 0; c < cm.classes; ++c) {
        if (c == healthy_index) continue;
        correct_disease += static_cast<double>(cm.at(c, c));
        total_disease += static_cast<double>(cm.row_total(c));
    }
    const double healthy_correct = static_cast<double>(cm.at(healthy_index, healthy_index));

    MetricsReport m;
    m.sensitivity = ratio(correct_disease, total_disease);
    m.specificity = ratio(healthy_correct, static_cast<double>(cm.row_total(healthy_index)));
    m.score = (m.sensitivity + m.specificity) / 2.0;
    m.precision = ratio(healthy_correct, static_cast<double>(cm.column_total(healthy_index)));
    m.recall = m.specificity;
    m.fscore = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

MetricsReport ternary_metrics(const ConfusionMatrix& cm) {
    if (cm.classes != 3) throw UsageError("ternary_metrics: expected a 3x3 matrix");
    return healthy_positive_metrics(cm, 2);
}

MetricsReport pathology_metrics(const ConfusionMatrix& cm) {
    if (cm.classes != 6) throw UsageError("pathology_metrics: expected a 6x6 matrix");
    return healthy_positive_metrics(cm, 2);
}

std::vector<double> as_vector(const MetricsReport& m) {
    return {m.sensitivity, m.specificity, m.score, m.precision, m.recall, m.fscore};
}

double accuracy(const ConfusionMatrix& cm) {
    double correct = 0.0;
    for (std::size_t c = 0; c < cm.classes; ++c) correct += static_cast<double>(cm.at(c, c));
    return ratio(correct, static_cast<double>(cm.total()));
}

}  // namespace pulmo::eval
