#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "pulmo/dataset.hpp"
#include "pulmo/rng.hpp"

namespace pulmo {

struct ClassWeights {
    std::vector<double> weights;  // indexed by class
};

/// Balanced heuristic w_c = N / (K n_c). Throws UsageError on an empty class.
ClassWeights class_weights(std::span<const std::size_t> counts);

enum class OversampleMethod { None, Weights, Smote, Adasyn, Vae };

std::string_view to_string(OversampleMethod m);
OversampleMethod parse_method(std::string_view name);  // none|weights|smote|adasyn|vae

struct OversamplePlan {
    OversampleMethod method = OversampleMethod::None;
    std::vector<std::size_t> targets;  // per class; empty = leave counts as they are
    std::size_t k_neighbors = 5;
    std::uint64_t seed = 0;

    /// Ternary: {810, 900, 840}. SixClass: COPD 793, pneumonia 817, the
    /// other four minorities 816 (total 4874).
    static std::vector<std::size_t> default_targets(const LabelScheme& scheme);

    /// Per-class rescale for a subset: target_c * subset_c / full_c rounded,
    /// never below subset_c. Keeps each class's augmentation multiplier.
    OversamplePlan scaled_to(std::span<const std::size_t> full_counts,
                             std::span<const std::size_t> subset_counts) const;
};

/// Parent rows of one synthetic sample: s = base + lambda (neighbor - base).
struct SyntheticTrace {
    std::size_t base = 0;
    std::size_t neighbor = 0;
    double lambda = 0.0;
};

struct OversampleResult {
    std::vector<std::vector<float>> rows;
    std::vector<SyntheticTrace> trace;  // indices into the minority rows
};

using RowView = std::span<const float>;

/// k nearest neighbours of each query row among `pool` (squared Euclidean,
/// ties to the lower index). When `exclude_self` the query's own index in
/// the pool is skipped. k is capped at the number of candidates.
std::vector<std::vector<std::size_t>> nearest_neighbors(std::span<const RowView> queries, std::span<const RowView> pool,
                                                        std::size_t k, bool exclude_self, std::size_t jobs = 1);

/// SMOTE over one minority class. Throws UsageError with fewer than two
/// rows or k = 0.
OversampleResult smote(std::span<const RowView> minority, std::size_t n_new, std::size_t k, Rng& rng,
                       std::size_t jobs = 1);

/// Largest-remainder rounding of ratio_i * n_new (ratios normalized by
/// their sum); uniform split when the ratios sum to 0. Sum is exactly n_new.
std::vector<std::size_t> adasyn_allocation(std::span<const double> ratios, std::size_t n_new);

/// ADASYN: density ratios from the k nearest neighbours in the full set
/// (labels[i] != minority_label counts as majority), interpolation with
/// neighbours inside the minority class.
OversampleResult adasyn(std::span<const RowView> all_rows, std::span<const std::size_t> labels,
                        std::size_t minority_label, std::size_t n_new, std::size_t k, Rng& rng,
                        std::size_t jobs = 1, std::vector<double>* ratios_out = nullptr);

/// Synthesizes `n_new` rows for one class from its original samples.
using ClassGenerator =
    std::function<std::vector<std::vector<float>>(std::span<const Sample* const> originals, std::size_t n_new,
                                                  std::size_t label, std::uint64_t seed)>;

/// Raises every class to its target. Originals are kept untouched and in
/// order; synthetics are appended per class, flagged, clipped to [0, 1] and
/// carry parent ids. None/Weights return the input unchanged. Vae requires
/// `vae_generator`.
LabeledDataset apply_plan(const LabeledDataset& data, const OversamplePlan& plan,
                          const ClassGenerator* vae_generator = nullptr, std::size_t jobs = 1);

}  // namespace pulmo
