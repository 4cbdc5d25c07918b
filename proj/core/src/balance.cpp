#include "pulmo/balance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pulmo/error.hpp"
#include "pulmo/parallel.hpp"

namespace pulmo {

ClassWeights class_weights(std::span<const std::size_t> counts) {
    if (counts.empty()) throw UsageError("class_weights: no classes");
    double total = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw UsageError("class_weights: class " + std::to_string(c) + " is empty");
        total += static_cast<double>(counts[c]);
    }
    ClassWeights w;
    const double k = static_cast<double>(counts.size());
    for (std::size_t n : counts) w.weights.push_back(total / (k * static_cast<double>(n)));
    return w;
}

std::string_view to_string(OversampleMethod m) {
    switch (m) {
        case OversampleMethod::None: return "none";
        case OversampleMethod::Weights: return "weights";
        case OversampleMethod::Smote: return "smote";
        case OversampleMethod::Adasyn: return "adasyn";
        case OversampleMethod::Vae: return "vae";
    }
    return "?";
}

OversampleMethod parse_method(std::string_view name) {
    for (auto m : {OversampleMethod::None, OversampleMethod::Weights, OversampleMethod::Smote, OversampleMethod::Adasyn,
                   OversampleMethod::Vae})
        if (to_string(m) == name) return m;
    throw UsageError("unknown method \"" + std::string(name) + "\" (allowed: none, weights, smote, adasyn, vae)");
}

std::vector<std::size_t> OversamplePlan::default_targets(const LabelScheme& scheme) {
    if (scheme.variant() == Scheme::Ternary) return {810, 900, 840};
    return {793, 817, 816, 816, 816, 816};
}

OversamplePlan OversamplePlan::scaled_to(std::span<const std::size_t> full_counts,
                                         std::span<const std::size_t> subset_counts) const {
    OversamplePlan out = *this;
    if (targets.empty()) return out;
    if (full_counts.size() != targets.size() || subset_counts.size() != targets.size())
        throw UsageError("OversamplePlan::scaled_to: class count mismatch");
    for (std::size_t c = 0; c < targets.size(); ++c) {
        if (full_counts[c] == 0) {
            out.targets[c] = subset_counts[c];
            continue;
        }
        const double scaled = static_cast<double>(targets[c]) * static_cast<double>(subset_counts[c]) /
                              static_cast<double>(full_counts[c]);
        out.targets[c] = std::max(subset_counts[c], static_cast<std::size_t>(std::llround(scaled)));
    }
    return out;
}

std::vector<std::vector<std::size_t>> nearest_neighbors(std::span<const RowView> queries, std::span<const RowView> pool,
                                                        std::size_t k, bool exclude_self, std::size_t jobs) {
    std::vector<std::vector<std::size_t>> result(queries.size());
    parallel_for(queries.size(), jobs, [&](std::size_t q) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(pool.size());
        const RowView a = queries[q];
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (exclude_self && j == q) continue;
            const RowView b = pool[j];
            if (b.size() != a.size()) throw UsageError("nearest_neighbors: row length mismatch");
            double d = 0.0;
            for (std::size_t f = 0; f < a.size(); ++f) {
                const double diff = static_cast<double>(a[f]) - b[f];
                d += diff * diff;
            }
            dist.emplace_back(d, j);
        }
        const std::size_t kk = std::min(k, dist.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        result[q].reserve(kk);
        for (std::size_t i = 0; i < kk; ++i) result[q].push_back(dist[i].second);
    });
    return result;
}

namespace {

std::vector<float> interpolate(RowView base, RowView neighbor, double lambda) {
    std::vector<float> out(base.size());
    for (std::size_t f = 0; f < base.size(); ++f)
        out[f] = static_cast<float>(base[f] + lambda * (static_cast<double>(neighbor[f]) - base[f]));
    return out;
}

void check_minority(std::span<const RowView> minority, std::size_t k) {
    if (minority.size() < 2) throw UsageError("oversampling needs at least 2 minority rows");
    if (k < 1) throw UsageError("oversampling needs k >= 1");
}

}  // namespace

OversampleResult smote(std::span<const RowView> minority, std::size_t n_new, std::size_t k, Rng& rng,
                       std::size_t jobs) {
    check_minority(minority, k);
    OversampleResult out;
    if (n_new == 0) return out;
    const auto neighbors = nearest_neighbors(minority, minority, std::min(k, minority.size() - 1), true, jobs);
    out.rows.reserve(n_new);
    out.trace.reserve(n_new);
    for (std::size_t i = 0; i < n_new; ++i) {
        const std::size_t base = rng.index(minority.size());
        const auto& nn = neighbors[base];
        const std::size_t neighbor = nn[rng.index(nn.size())];
        const double lambda = rng.uniform();
        out.rows.push_back(interpolate(minority[base], minority[neighbor], lambda));
        out.trace.push_back({base, neighbor, lambda});
    }
    return out;
}

std::vector<std::size_t> adasyn_allocation(std::span<const double> ratios, std::size_t n_new) {
    const std::size_t n = ratios.size();
    std::vector<std::size_t> alloc(n, 0);
    if (n == 0 || n_new == 0) return alloc;
    const double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
    std::vector<double> share(n);
    for (std::size_t i = 0; i < n; ++i)
        share[i] = sum > 0.0 ? ratios[i] / sum * static_cast<double>(n_new)
                             : static_cast<double>(n_new) / static_cast<double>(n);

    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t i = 0; i < n; ++i) {
        alloc[i] = static_cast<std::size_t>(std::floor(share[i]));
        assigned += alloc[i];
        remainders.emplace_back(share[i] - static_cast<double>(alloc[i]), i);
    }
    // Largest remainders first; ties go to the lower index.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_new; r = (r + 1) % n, ++assigned) ++alloc[remainders[r].second];
    return alloc;
}

OversampleResult adasyn(std::span<const RowView> all_rows, std::span<const std::size_t> labels,
                        std::size_t minority_label, std::size_t n_new, std::size_t k, Rng& rng, std::size_t jobs,
                        std::vector<double>* ratios_out) {
    if (all_rows.size() != labels.size()) throw UsageError("adasyn: rows/labels length mismatch");
    std::vector<RowView> minority;
    std::vector<std::size_t> minority_index;
    for (std::size_t i = 0; i < all_rows.size(); ++i)
        if (labels[i] == minority_label) {
            minority.push_back(all_rows[i]);
            minority_index.push_back(i);
        }
    check_minority(minority, k);

    // Density ratios: majority points among each minority point's k nearest in the full set.
    std::vector<double> ratios(minority.size());
    {
        std::vector<std::vector<std::size_t>> nn(minority.size());
        parallel_for(minority.size(), jobs, [&](std::size_t q) {
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(all_rows.size());
            for (std::size_t j = 0; j < all_rows.size(); ++j) {
                if (j == minority_index[q]) continue;
                double d = 0.0;
                for (std::size_t f = 0; f < minority[q].size(); ++f) {
                    const double diff = static_cast<double>(minority[q][f]) - all_rows[j][f];
                    d += diff * diff;
                }
                dist.emplace_back(d, j);
            }
            const std::size_t kk = std::min(k, dist.size());
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
            for (std::size_t i = 0; i < kk; ++i) nn[q].push_back(dist[i].second);
        });
        for (std::size_t q = 0; q < minority.size(); ++q) {
            std::size_t majority = 0;
            for (std::size_t j : nn[q])
                if (labels[j] != minority_label) ++majority;
            ratios[q] = nn[q].empty() ? 0.0 : static_cast<double>(majority) / static_cast<double>(k);
        }
    }
    if (ratios_out) *ratios_out = ratios;

    OversampleResult out;
    if (n_new == 0) return out;
    const auto alloc = adasyn_allocation(ratios, n_new);
    const auto neighbors = nearest_neighbors(minority, minority, std::min(k, minority.size() - 1), true, jobs);
    out.rows.reserve(n_new);
    out.trace.reserve(n_new);
    for (std::size_t i = 0; i < minority.size(); ++i) {
        for (std::size_t g = 0; g < alloc[i]; ++g) {
            const auto& nn = neighbors[i];
            const std::size_t neighbor = nn[rng.index(nn.size())];
            const double lambda = rng.uniform();
            out.rows.push_back(interpolate(minority[i], minority[neighbor], lambda));
            out.trace.push_back({i, neighbor, lambda});
        }
    }
    return out;
}

LabeledDataset apply_plan(const LabeledDataset& data, const OversamplePlan& plan,
                          const ClassGenerator* vae_generator, std::size_t jobs) {
    if (plan.method == OversampleMethod::None || plan.method == OversampleMethod::Weights || plan.targets.empty())
        return data;
    const std::size_t K = data.scheme.num_classes();
    if (plan.targets.size() != K)
        throw UsageError("apply_plan: " + std::to_string(plan.targets.size()) + " targets for " + std::to_string(K) +
                         " classes");
    if (plan.method == OversampleMethod::Vae && !vae_generator)
        throw UsageError("apply_plan: method vae needs a VAE generator");

    const auto counts = data.class_counts();
    for (std::size_t c = 0; c < K; ++c)
        if (plan.targets[c] < counts[c])
            throw UsageError("apply_plan: target " + std::to_string(plan.targets[c]) + " below current count " +
                             std::to_string(counts[c]) + " for class " + data.scheme.class_names()[c]);

    std::vector<RowView> all_rows;
    std::vector<std::size_t> all_labels;
    for (const auto& s : data.samples) {
        all_rows.emplace_back(s.features);
        all_labels.push_back(s.label);
    }

    std::vector<std::vector<Sample>> generated(K);
    // Classes are independent (own rng stream); neighbour searches stay serial inside.
    parallel_for(K, jobs, [&](std::size_t c) {
        const std::size_t n_new = plan.targets[c] - counts[c];
        if (n_new == 0) return;
        std::vector<const Sample*> originals;
        std::vector<RowView> rows;
        for (const auto& s : data.samples)
            if (s.label == c) {
                originals.push_back(&s);
                rows.emplace_back(s.features);
            }

        const std::string method(to_string(plan.method));
        std::vector<std::vector<float>> synth;
        std::vector<std::vector<std::string>> parents;
        if (plan.method == OversampleMethod::Vae) {
            synth = (*vae_generator)(originals, n_new, c, Rng::derive(plan.seed, "vae-" + data.scheme.class_names()[c], c));
            if (synth.size() != n_new) throw DataError("apply_plan: VAE generator returned the wrong sample count");
            std::vector<std::string> all_parents;
            for (const Sample* s : originals) all_parents.push_back(s->id);
            parents.assign(n_new, all_parents);
        } else {
            Rng rng = Rng::stream(plan.seed, method, c);
            OversampleResult r = plan.method == OversampleMethod::Smote
                                     ? smote(rows, n_new, plan.k_neighbors, rng)
                                     : adasyn(all_rows, all_labels, c, n_new, plan.k_neighbors, rng);
            synth = std::move(r.rows);
            for (const auto& t : r.trace) parents.push_back({originals[t.base]->id, originals[t.neighbor]->id});
        }

        auto& out = generated[c];
        out.reserve(n_new);
        for (std::size_t i = 0; i < n_new; ++i) {
            Sample s;
            char suffix[32];
            std::snprintf(suffix, sizeof suffix, "%05zu", i);
            s.id = "syn_" + method + "_" + data.scheme.class_names()[c] + "_" + suffix;
            s.label = c;
            s.synthetic = true;
            s.parents = std::move(parents[i]);
            s.features = std::move(synth[i]);
            if (s.features.size() != data.feature_size()) throw DataError("apply_plan: synthetic sample has wrong size");
            for (float& v : s.features) v = std::clamp(v, 0.0f, 1.0f);
            out.push_back(std::move(s));
        }
    });

    LabeledDataset result = data;
    for (auto& per_class : generated)
        for (auto& s : per_class) result.samples.push_back(std::move(s));
    return result;
}

}  // namespace pulmo
