#include "pulmo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include "json.hpp"
#include <numeric>
#include <set>
#include <sstream>

#include "pulmo/error.hpp"
#include "pulmo/parallel.hpp"

namespace pulmo::eval {

using nlohmann::json;

// ------------------------------------------------------------------ folds

std::vector<Fold> kfold_split(std::span<const std::size_t> labels, std::size_t k, bool stratified, Rng& rng) {
    const std::size_t n = labels.size();
    if (k < 2) throw UsageError("kfold_split: k must be >= 2");
    if (k > n) throw UsageError("kfold_split: k = " + std::to_string(k) + " exceeds dataset size " + std::to_string(n));

    std::vector<Fold> folds(k);
    std::size_t cursor = 0;
    auto deal = [&](std::vector<std::size_t>& members) {
        rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t i : members) {
            folds[cursor].push_back(i);
            cursor = (cursor + 1) % k;
        }
    };
    if (stratified) {
        const std::size_t classes = n ? *std::max_element(labels.begin(), labels.end()) + 1 : 0;
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == c) members.push_back(i);
            deal(members);
        }
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        deal(all);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<Fold> kfold_split_grouped(std::span<const int> groups, std::size_t k, Rng& rng) {
    if (k < 2) throw UsageError("kfold_split_grouped: k must be >= 2");
    std::map<int, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < groups.size(); ++i) by_group[groups[i]].push_back(i);
    if (k > by_group.size())
        throw UsageError("kfold_split_grouped: k = " + std::to_string(k) + " exceeds group count " +
                         std::to_string(by_group.size()));

    std::vector<std::vector<std::size_t>> members;
    for (auto& [g, idx] : by_group) members.push_back(std::move(idx));
    rng.shuffle(std::span<std::vector<std::size_t>>(members));
    std::stable_sort(members.begin(), members.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });

    std::vector<Fold> folds(k);
    for (auto& m : members) {
        auto smallest = std::min_element(folds.begin(), folds.end(),
                                         [](const Fold& a, const Fold& b) { return a.size() < b.size(); });
        smallest->insert(smallest->end(), m.begin(), m.end());
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::pair<Fold, Fold> stratified_holdout(std::span<const std::size_t> labels, double fraction, Rng& rng) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw UsageError("stratified_holdout: fraction must lie in [0, 1)");
    Fold kept, held;
    const std::size_t classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        rng.shuffle(std::span<std::size_t>(members));
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        for (std::size_t j = 0; j < members.size(); ++j) (j < take ? held : kept).push_back(members[j]);
    }
    std::sort(kept.begin(), kept.end());
    std::sort(held.begin(), held.end());
    return {kept, held};
}

// ---------------------------------------------------------- config names

std::string_view to_string(Configuration c) {
    switch (c) {
        case Configuration::Unbalanced: return "unbalanced";
        case Configuration::Weighted: return "weighted";
        case Configuration::Vae: return "vae";
        case Configuration::Smote: return "smote";
        case Configuration::Adasyn: return "adasyn";
    }
    return "?";
}

std::string_view to_string(Protocol p) { return p == Protocol::Default ? "default" : "paper"; }

std::string_view to_string(Split s) { return s == Split::KFold ? "kfold" : "holdout"; }

Split parse_split(std::string_view name) {
    if (name == "kfold") return Split::KFold;
    if (name == "holdout") return Split::Holdout;
    throw UsageError("unknown split \"" + std::string(name) + "\" (allowed: kfold, holdout)");
}

Configuration configuration_from_method(OversampleMethod m) {
    switch (m) {
        case OversampleMethod::None: return Configuration::Unbalanced;
        case OversampleMethod::Weights: return Configuration::Weighted;
        case OversampleMethod::Smote: return Configuration::Smote;
        case OversampleMethod::Adasyn: return Configuration::Adasyn;
        case OversampleMethod::Vae: return Configuration::Vae;
    }
    return Configuration::Unbalanced;
}

OversampleMethod method_of(Configuration c) {
    switch (c) {
        case Configuration::Unbalanced: return OversampleMethod::None;
        case Configuration::Weighted: return OversampleMethod::Weights;
        case Configuration::Smote: return OversampleMethod::Smote;
        case Configuration::Adasyn: return OversampleMethod::Adasyn;
        case Configuration::Vae: return OversampleMethod::Vae;
    }
    return OversampleMethod::None;
}

Configuration parse_configuration(std::string_view name) {
    for (auto c : {Configuration::Unbalanced, Configuration::Weighted, Configuration::Vae, Configuration::Smote,
                   Configuration::Adasyn})
        if (to_string(c) == name) return c;
    throw DataError("unknown configuration \"" + std::string(name) + "\"");
}

Protocol parse_protocol(std::string_view name) {
    if (name == "default") return Protocol::Default;
    if (name == "paper") return Protocol::Paper;
    throw UsageError("unknown protocol \"" + std::string(name) + "\" (allowed: default, paper)");
}

// ------------------------------------------------------------ classifier

namespace {

class CnnClassifier final : public Classifier {
public:
    CnnClassifier(std::size_t rows, std::size_t cols, std::size_t classes, const cnn::TrainConfig& config,
                  double dropout)
        : config_(config), model_(make(rows, cols, classes, config.seed, dropout)) {}

    void fit(const LabeledDataset& training, const LabeledDataset& validation,
             const std::optional<std::vector<double>>& class_weights) override {
        cnn::TrainConfig c = config_;
        c.class_weights = class_weights;
        history_ = cnn::train(model_, to_batch(training), to_batch(validation), c);
    }

    std::size_t predict(std::span<const float> features) override { return cnn::predict(model_, features).label; }

    std::string history_csv() const override { return history_.to_csv(); }
    std::vector<nn::NamedArray> checkpoint() const override { return model_.state(); }

private:
    static cnn::CnnModel<float> make(std::size_t rows, std::size_t cols, std::size_t classes, std::uint64_t seed,
                                     double dropout) {
        cnn::Architecture arch;
        arch.rows = rows;
        arch.cols = cols;
        arch.n_classes = classes;
        arch.dropout = dropout;
        Rng init = Rng::stream(seed, "init");
        return cnn::CnnModel<float>(arch, init);
    }

    static cnn::Batch to_batch(const LabeledDataset& d) {
        cnn::Batch b;
        for (const auto& s : d.samples) {
            b.features.emplace_back(s.features);
            b.labels.push_back(s.label);
        }
        return b;
    }

    cnn::TrainConfig config_;
    cnn::CnnModel<float> model_;
    cnn::History history_;
};

}  // namespace

ClassifierFactory cnn_factory(const cnn::TrainConfig& base, double dropout) {
    return [base, dropout](std::size_t rows, std::size_t cols, std::size_t classes, std::uint64_t seed) {
        cnn::TrainConfig c = base;
        c.seed = seed;
        return std::make_unique<CnnClassifier>(rows, cols, classes, c, dropout);
    };
}

// ------------------------------------------------------------ experiment

std::pair<MetricsReport, MetricsReport> aggregate(std::span<const MetricsReport> reports) {
    MetricsReport mean, sd;
    if (reports.empty()) return {mean, sd};
    std::vector<double> m(6, 0.0), s(6, 0.0);
    for (const auto& r : reports) {
        const auto v = as_vector(r);
        for (std::size_t i = 0; i < 6; ++i) m[i] += v[i];
    }
    const double n = static_cast<double>(reports.size());
    for (double& x : m) x /= n;
    if (reports.size() > 1) {
        for (const auto& r : reports) {
            const auto v = as_vector(r);
            for (std::size_t i = 0; i < 6; ++i) s[i] += (v[i] - m[i]) * (v[i] - m[i]);
        }
        for (double& x : s) x = std::sqrt(x / (n - 1.0));
    }
    auto pack = [](const std::vector<double>& v) { return MetricsReport{v[0], v[1], v[2], v[3], v[4], v[5]}; };
    return {pack(m), pack(s)};
}

namespace {

OversamplePlan make_plan(const LabeledDataset& data, const ExperimentConfig& config) {
    OversamplePlan plan;
    plan.method = method_of(config.configuration);
    plan.targets = config.targets.empty() ? OversamplePlan::default_targets(data.scheme) : config.targets;
    plan.k_neighbors = config.k_neighbors;
    return plan;
}

LabeledDataset balance(const LabeledDataset& data, OversamplePlan plan, const ExperimentConfig& config,
                       std::uint64_t seed) {
    plan.seed = seed;
    if (plan.method != OversampleMethod::Vae) return apply_plan(data, plan);
    const ClassGenerator gen = vae::class_generator(config.vae, data.rows, data.cols);
    return apply_plan(data, plan, &gen);
}

}  // namespace

ExperimentResult run_experiment(const LabeledDataset& input, const ExperimentConfig& config,
                                const ClassifierFactory& factory) {
    input.validate();
    if (input.samples.empty()) throw DataError("run_experiment: empty dataset");
    const std::size_t K = input.scheme.num_classes();
    const OversamplePlan base_plan = make_plan(input, config);

    // Paper protocol: balance everything, then split the augmented set.
    const LabeledDataset data = config.protocol == Protocol::Paper && base_plan.method != OversampleMethod::None &&
                                        base_plan.method != OversampleMethod::Weights
                                    ? balance(input, base_plan, config, Rng::derive(config.seed, "balance"))
                                    : input;
    const auto full_counts = input.class_counts();

    Rng split_rng = Rng::stream(config.seed, "split");
    std::vector<Fold> folds;
    if (config.split == Split::Holdout) {
        const auto labels = data.labels();
        folds.push_back(stratified_holdout(labels, config.test_fraction, split_rng).second);
        if (folds.front().empty()) throw UsageError("run_experiment: holdout test split is empty");
    } else if (config.patient_disjoint) {
        std::vector<int> groups;
        for (const auto& s : data.samples) groups.push_back(s.patient_id);
        folds = kfold_split_grouped(groups, config.folds, split_rng);
    } else {
        const auto labels = data.labels();
        folds = kfold_split(labels, config.folds, config.stratified, split_rng);
    }

    ExperimentResult result;
    result.configuration = config.configuration;
    result.protocol = config.protocol;
    result.split = config.split;
    result.scheme = std::string(data.scheme.name());
    result.class_names = data.scheme.class_names();
    result.seed = config.seed;
    result.folds.resize(folds.size());

    parallel_for(folds.size(), config.jobs, [&](std::size_t f) {
        const Fold& test_idx = folds[f];
        std::vector<bool> in_test(data.size(), false);
        for (std::size_t i : test_idx) in_test[i] = true;
        Fold rest;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!in_test[i]) rest.push_back(i);
        const LabeledDataset rest_set = data.subset(rest);
        const LabeledDataset test_set = data.subset(test_idx);

        Rng val_rng = Rng::stream(config.seed, "validation", f);
        const auto [train_idx, val_idx] = stratified_holdout(rest_set.labels(), config.validation_fraction, val_rng);
        LabeledDataset train_set = rest_set.subset(train_idx);
        const LabeledDataset val_set = rest_set.subset(val_idx);

        if (config.protocol == Protocol::Default) {
            const OversamplePlan plan = base_plan.scaled_to(full_counts, train_set.class_counts());
            train_set = balance(train_set, plan, config, Rng::derive(config.seed, "balance", f));
        }

        std::optional<std::vector<double>> weights;
        if (config.configuration == Configuration::Weighted) weights = class_weights(train_set.class_counts()).weights;

        FoldResult& out = result.folds[f];
        out.fold = f + 1;
        out.train_size = train_set.size();
        out.validation_size = val_set.size();
        out.test_size = test_set.size();
        out.test_indices = test_idx;

        std::set<std::string> test_ids;
        for (const auto& s : test_set.samples) test_ids.insert(s.id);
        std::set<std::string> leaked;
        for (const auto& s : train_set.samples) {
            if (!s.synthetic) continue;
            ++out.synthetic_in_train;
            for (const auto& p : s.parents)
                if (test_ids.count(p)) leaked.insert(p);
        }
        out.leaked_parents = leaked.size();
        if (config.protocol == Protocol::Default && !leaked.empty())
            throw DataError("fold " + std::to_string(f + 1) + ": training synthetics descend from test samples");

        auto model = factory(data.rows, data.cols, K, Rng::derive(config.seed, "classifier", f));
        model->fit(train_set, val_set, weights);

        std::vector<std::size_t> predictions, truths;
        for (const auto& s : test_set.samples) {
            predictions.push_back(model->predict(s.features));
            truths.push_back(s.label);
        }
        out.confusion = confusion(predictions, truths, K);
        out.metrics = healthy_positive_metrics(out.confusion, data.scheme.healthy_index());
        out.accuracy = accuracy(out.confusion);
        out.history_csv = model->history_csv();
        out.model = model->checkpoint();
    });

    std::vector<MetricsReport> reports;
    double acc = 0.0;
    for (const auto& f : result.folds) {
        reports.push_back(f.metrics);
        acc += f.accuracy;
    }
    std::tie(result.mean, result.std) = aggregate(reports);
    result.mean_accuracy = acc / static_cast<double>(result.folds.size());
    return result;
}

ExperimentResult run_experiment(const LabeledDataset& data, const ExperimentConfig& config) {
    return run_experiment(data, config, cnn_factory(config.cnn, config.dropout));
}

// ------------------------------------------------------------ serialize

namespace {

json metrics_json(const MetricsReport& m) {
    return json{{"sensitivity", m.sensitivity}, {"specificity", m.specificity}, {"score", m.score},
                {"precision", m.precision},     {"recall", m.recall},           {"fscore", m.fscore}};
}

MetricsReport metrics_from(const json& j) {
    return {j.at("sensitivity").get<double>(), j.at("specificity").get<double>(), j.at("score").get<double>(),
            j.at("precision").get<double>(),   j.at("recall").get<double>(),      j.at("fscore").get<double>()};
}

}  // namespace

std::string to_json(const ExperimentResult& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        json jf = metrics_json(f.metrics);
        jf["fold"] = f.fold;
        jf["accuracy"] = f.accuracy;
        jf["train_size"] = f.train_size;
        jf["validation_size"] = f.validation_size;
        jf["test_size"] = f.test_size;
        jf["synthetic_in_train"] = f.synthetic_in_train;
        jf["leaked_parents"] = f.leaked_parents;
        folds.push_back(std::move(jf));
    }
    json j;
    j["configuration"] = std::string(to_string(r.configuration));
    j["scheme"] = r.scheme;
    j["seed"] = r.seed;
    j["protocol"] = std::string(to_string(r.protocol));
    j["split"] = std::string(to_string(r.split));
    j["std_kind"] = "sample";
    j["class_names"] = r.class_names;
    j["folds"] = std::move(folds);
    j["mean"] = metrics_json(r.mean);
    j["std"] = metrics_json(r.std);
    j["mean_accuracy"] = r.mean_accuracy;
    return j.dump(2) + "\n";
}

ExperimentResult from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
        ExperimentResult r;
        r.configuration = parse_configuration(j.at("configuration").get<std::string>());
        r.scheme = j.at("scheme").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.protocol = j.at("protocol").get<std::string>() == "paper" ? Protocol::Paper : Protocol::Default;
        if (j.contains("split")) r.split = parse_split(j.at("split").get<std::string>());
        if (j.contains("class_names")) r.class_names = j.at("class_names").get<std::vector<std::string>>();
        for (const auto& jf : j.at("folds")) {
            FoldResult f;
            f.metrics = metrics_from(jf);
            f.fold = jf.value("fold", std::size_t{0});
            f.accuracy = jf.value("accuracy", 0.0);
            f.train_size = jf.value("train_size", std::size_t{0});
            f.validation_size = jf.value("validation_size", std::size_t{0});
            f.test_size = jf.value("test_size", std::size_t{0});
            f.synthetic_in_train = jf.value("synthetic_in_train", std::size_t{0});
            f.leaked_parents = jf.value("leaked_parents", std::size_t{0});
            r.folds.push_back(std::move(f));
        }
        r.mean = metrics_from(j.at("mean"));
        r.std = metrics_from(j.at("std"));
        r.mean_accuracy = j.value("mean_accuracy", 0.0);
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("result file: ") + e.what());
    }
}

std::string format_fold_table(const ExperimentResult& r) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "";
    for (const auto& f : r.folds) out << std::right << std::setw(10) << f.fold;
    out << std::setw(10) << "Mean" << std::setw(10) << "Std" << '\n';
    const auto mean = as_vector(r.mean);
    const auto sd = as_vector(r.std);
    for (std::size_t m = 0; m < 6; ++m) {
        out << std::left << std::setw(12) << kMetricNames[m] << std::right << std::fixed << std::setprecision(6);
        for (const auto& f : r.folds) out << std::setw(10) << as_vector(f.metrics)[m];
        out << std::setw(10) << mean[m] << std::setw(10) << sd[m] << '\n';
    }
    return out.str();
}

}  // namespace pulmo::eval
