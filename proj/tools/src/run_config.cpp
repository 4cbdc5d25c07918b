#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "pulmo/error.hpp"

namespace pulmo::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw UsageError("expected a number, got \"" + std::string(v) + "\"");
    return out;
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw UsageError("expected true/false, got \"" + std::string(v) + "\"");
}

std::vector<std::size_t> parse_list(std::string_view v) {
    std::vector<std::size_t> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        out.push_back(parse_number<std::size_t>(trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string fmt(double d) {
    std::ostringstream s;
    s << d;
    return s.str();
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Field number(std::string section, std::string key, T RunConfig::*member) {
    return {std::move(section), std::move(key),
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt(c.*member);
                else return std::to_string(c.*member);
            },
            [member](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(v); }};
}

template <typename T, typename S>
Field nested(std::string section, std::string key, S RunConfig::*outer, T S::*member) {
    return {std::move(section), std::move(key),
            [outer, member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt(c.*outer.*member);
                else return std::to_string(c.*outer.*member);
            },
            [outer, member](RunConfig& c, std::string_view v) { c.*outer.*member = parse_number<T>(v); }};
}

Field text(std::string section, std::string key, std::string RunConfig::*member,
           std::function<void(std::string_view)> check = {}) {
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return c.*member; },
            [member, check](RunConfig& c, std::string_view v) {
                if (check && !v.empty()) check(v);
                c.*member = std::string(v);
            }};
}

Field path(std::string section, std::string key, std::filesystem::path RunConfig::*member) {
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return (c.*member).string(); },
            [member](RunConfig& c, std::string_view v) { c.*member = std::filesystem::path(v); }};
}

Field flag(std::string section, std::string key, bool RunConfig::*member) {
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return c.*member ? "true" : "false"; },
            [member](RunConfig& c, std::string_view v) { c.*member = parse_bool(v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        path("paths", "audio_dir", &RunConfig::audio_dir),
        path("paths", "diagnoses", &RunConfig::diagnoses),
        path("paths", "work_dir", &RunConfig::work_dir),

        nested("melspec", "sample_rate", &RunConfig::mel, &MelConfig::target_sample_rate),
        nested("melspec", "window_size", &RunConfig::mel, &MelConfig::window_size),
        nested("melspec", "hop", &RunConfig::mel, &MelConfig::hop),
        nested("melspec", "n_mels", &RunConfig::mel, &MelConfig::n_mels),
        nested("melspec", "fmin", &RunConfig::mel, &MelConfig::fmin),
        nested("melspec", "fmax", &RunConfig::mel, &MelConfig::fmax),
        nested("melspec", "log_floor", &RunConfig::mel, &MelConfig::log_floor),
        {"melspec", "resize",
         [](const RunConfig& c) { return std::string(c.mel.resize == ResizeMode::Interpolate ? "interpolate" : "croppad"); },
         [](RunConfig& c, std::string_view v) {
             if (v == "interpolate") c.mel.resize = ResizeMode::Interpolate;
             else if (v == "croppad") c.mel.resize = ResizeMode::CropPad;
             else throw UsageError("resize must be interpolate or croppad");
         }},

        text("balance", "method", &RunConfig::method, [](std::string_view v) { parse_method(v); }),
        {"balance", "targets",
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.targets.size(); ++i) s += (i ? "," : "") + std::to_string(c.targets[i]);
             return s;
         },
         [](RunConfig& c, std::string_view v) { c.targets = parse_list(v); }},
        number("balance", "k_neighbors", &RunConfig::k_neighbors),

        nested("vae_augment", "epochs", &RunConfig::vae, &vae::TrainConfig::epochs),
        nested("vae_augment", "batch_size", &RunConfig::vae, &vae::TrainConfig::batch_size),
        nested("vae_augment", "learning_rate", &RunConfig::vae, &vae::TrainConfig::learning_rate),
        nested("vae_augment", "hidden", &RunConfig::vae, &vae::TrainConfig::hidden),
        nested("vae_augment", "latent_dim", &RunConfig::vae, &vae::TrainConfig::latent_dim),
        nested("vae_augment", "kl_weight", &RunConfig::vae, &vae::TrainConfig::kl_weight),

        number("cnn_classifier", "epochs", &RunConfig::cnn_epochs),
        number("cnn_classifier", "batch_size", &RunConfig::cnn_batch_size),
        number("cnn_classifier", "learning_rate", &RunConfig::cnn_learning_rate),
        number("cnn_classifier", "patience", &RunConfig::cnn_patience),
        number("cnn_classifier", "dropout", &RunConfig::dropout),

        text("evaluate", "scheme", &RunConfig::scheme, [](std::string_view v) { LabelScheme::parse(v); }),
        text("evaluate", "protocol", &RunConfig::protocol, [](std::string_view v) { eval::parse_protocol(v); }),
        text("evaluate", "split", &RunConfig::split, [](std::string_view v) { eval::parse_split(v); }),
        number("evaluate", "folds", &RunConfig::folds),
        number("evaluate", "test_fraction", &RunConfig::test_fraction),
        number("evaluate", "validation_fraction", &RunConfig::validation_fraction),
        flag("evaluate", "stratified", &RunConfig::stratified),
        flag("evaluate", "patient_disjoint", &RunConfig::patient_disjoint),

        number("run", "seed", &RunConfig::seed),
        number("run", "jobs", &RunConfig::jobs),
    };
    return table;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, RunConfig config) {
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const std::string where = "config line " + std::to_string(line_no) + ": ";

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError(where + "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            bool known = false;
            for (const auto& f : fields()) known = known || f.section == section;
            if (!known) throw UsageError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw UsageError(where + "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section.empty()) throw UsageError(where + "key \"" + key + "\" outside any section");

        const Field* field = nullptr;
        for (const auto& f : fields())
            if (f.section == section && f.key == key) field = &f;
        if (!field) throw UsageError(where + "unknown key \"" + key + "\" in [" + section + "]");
        if (!seen.insert(section + "." + key).second) throw UsageError(where + "duplicate key \"" + key + "\"");
        try {
            field->set(config, value);
        } catch (const std::exception& e) {
            throw UsageError(where + key + ": " + e.what());
        }
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& file, RunConfig base) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot open config file " + file.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_run_config(buffer.str(), std::move(base));
    } catch (const UsageError& e) {
        throw UsageError(file.string() + ": " + e.what());
    }
}

void write_run_config(std::ostream& out, const RunConfig& config) {
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
            section = f.section;
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
}

eval::ExperimentConfig experiment_config(const RunConfig& rc) {
    eval::ExperimentConfig c;
    c.configuration = eval::configuration_from_method(parse_method(rc.method));
    c.protocol = eval::parse_protocol(rc.protocol);
    c.split = eval::parse_split(rc.split);
    c.folds = rc.folds;
    c.test_fraction = rc.test_fraction;
    c.stratified = rc.stratified;
    c.patient_disjoint = rc.patient_disjoint;
    c.validation_fraction = rc.validation_fraction;
    c.targets = rc.targets;
    c.k_neighbors = rc.k_neighbors;
    c.vae = rc.vae;
    c.cnn.epochs = rc.cnn_epochs;
    c.cnn.batch_size = rc.cnn_batch_size;
    c.cnn.learning_rate = rc.cnn_learning_rate;
    c.cnn.patience = rc.cnn_patience;
    c.dropout = rc.dropout;
    c.seed = rc.seed;
    c.jobs = rc.jobs;
    return c;
}

}  // namespace pulmo::cli
