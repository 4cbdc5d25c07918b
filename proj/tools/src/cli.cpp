#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "pulmo/audio.hpp"
#include "pulmo/checkpoint.hpp"
#include "pulmo/dataset.hpp"
#include "pulmo/error.hpp"
#include "pulmo/experiment.hpp"
#include "pulmo/ingest.hpp"
#include "pulmo/melspec.hpp"
#include "pulmo/parallel.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace pulmo::cli {

namespace {

// Flag values stay empty unless given, so they only override what the
// config file set.
struct Overrides {
    std::string config;
    std::optional<std::string> audio_dir, diagnoses, work_dir;
    std::optional<std::string> scheme, method, protocol, split;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds, jobs;
    std::optional<double> sample_rate, fmin, fmax;
    std::optional<std::size_t> window_size, hop, n_mels;
    std::optional<std::string> resize;
};

template <typename T>
std::string str(const T& v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

RunConfig resolve(const Overrides& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.audio_dir) c.audio_dir = *o.audio_dir;
    if (o.diagnoses) c.diagnoses = *o.diagnoses;
    if (o.work_dir) c.work_dir = *o.work_dir;
    if (o.scheme) c.scheme = *o.scheme;
    if (o.method) c.method = *o.method;
    if (o.protocol) c.protocol = *o.protocol;
    if (o.split) c.split = *o.split;
    if (o.seed) c.seed = *o.seed;
    if (o.folds) c.folds = *o.folds;
    if (o.jobs) c.jobs = *o.jobs;
    if (o.sample_rate) c.mel.target_sample_rate = *o.sample_rate;
    if (o.fmin) c.mel.fmin = *o.fmin;
    if (o.fmax) c.mel.fmax = *o.fmax;
    if (o.window_size) c.mel.window_size = *o.window_size;
    if (o.hop) c.mel.hop = *o.hop;
    if (o.n_mels) c.mel.n_mels = *o.n_mels;
    if (o.resize) {
        if (*o.resize == "interpolate") c.mel.resize = ResizeMode::Interpolate;
        else if (*o.resize == "croppad") c.mel.resize = ResizeMode::CropPad;
        else throw UsageError("--resize must be interpolate or croppad");
    }
    if (c.jobs == 0) throw UsageError("--jobs must be at least 1");
    return c;
}

void add_config(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "Run configuration file (flags override its values)");
}

void add_common(CLI::App* cmd, Overrides& o, const RunConfig& d) {
    cmd->add_option("--seed", o.seed, "Global seed")->default_str(str(d.seed));
    cmd->add_option("--jobs", o.jobs, "Worker threads (results do not depend on it)")->default_str(str(d.jobs));
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void print_counts(std::ostream& out, const LabelScheme& scheme, std::span<const std::size_t> counts,
                  std::size_t dropped) {
    std::size_t width = 5;
    for (const auto& n : scheme.class_names()) width = std::max(width, n.size());
    std::size_t total = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        out << std::left << std::setw(static_cast<int>(width + 2)) << scheme.class_names()[c] << std::right
            << std::setw(6) << counts[c] << '\n';
        total += counts[c];
    }
    out << std::left << std::setw(static_cast<int>(width + 2)) << "total" << std::right << std::setw(6) << total
        << '\n';
    if (dropped) out << "dropped " << dropped << " recording(s) outside the " << scheme.name() << " scheme\n";
}

// ------------------------------------------------------------------ ingest

int cmd_ingest(const RunConfig& c, const fs::path& manifest_out, std::ostream& out, std::ostream& err) {
    if (c.audio_dir.empty()) throw UsageError("ingest: --audio-dir is required");
    if (c.diagnoses.empty()) throw UsageError("ingest: --diagnoses is required");
    if (!fs::is_directory(c.audio_dir)) throw UsageError("audio directory not found: " + c.audio_dir.string());
    if (!fs::is_regular_file(c.diagnoses)) throw UsageError("diagnosis file not found: " + c.diagnoses.string());

    const LabelScheme scheme = LabelScheme::parse(c.scheme.empty() ? "ternary" : c.scheme);
    const DiagnosisTable table = load_diagnoses_file(c.diagnoses);
    const LabeledAudioSet set = build_dataset(c.audio_dir, table, scheme);

    auto file = open_out(manifest_out);
    write_manifest(file, manifest_rows(set));
    if (set.recordings.empty()) err << "warning: no recordings found in " << c.audio_dir.string() << '\n';
    out << "scheme " << scheme.name() << ", manifest " << manifest_out.string() << '\n';
    print_counts(out, scheme, set.class_counts(), set.dropped);
    return kOk;
}

// --------------------------------------------------------------- featurize

int cmd_featurize(const RunConfig& c, const fs::path& manifest_path, const fs::path& out_dir, std::ostream& out,
                  std::ostream& err) {
    if (c.audio_dir.empty()) throw UsageError("featurize: --audio-dir is required");
    c.mel.validate();
    std::ifstream in(manifest_path);
    if (!in) throw UsageError("manifest not found: " + manifest_path.string());
    const auto rows = read_manifest(in);

    // Pass 1: column count of every clip, from its resampled length.
    std::vector<std::optional<std::size_t>> columns(rows.size());
    std::vector<std::string> failures(rows.size());
    parallel_for(rows.size(), c.jobs, [&](std::size_t i) {
        try {
            const AudioClip clip = read_wav_file(c.audio_dir / (rows[i].source_id + ".wav"));
            const AudioClip audio = resample_linear(clip, c.mel.target_sample_rate);
            const std::size_t n = frame_count(audio.samples.size(), c.mel);
            if (n == 0) throw DataError("clip shorter than one analysis window");
            columns[i] = n;
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    std::vector<std::size_t> counts;
    for (const auto& n : columns)
        if (n) counts.push_back(*n);
    if (counts.empty()) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!failures[i].empty()) err << rows[i].source_id << ": " << failures[i] << '\n';
        throw DataError("featurize: no readable recordings in " + manifest_path.string());
    }
    const std::size_t target = mean_columns(counts);
    out << "target width: " << target << " columns (mean over " << counts.size() << " spectrograms)\n";

    // Pass 2: spectrogram, resize to the common width, normalize, write.
    fs::create_directories(out_dir);
    parallel_for(rows.size(), c.jobs, [&](std::size_t i) {
        if (!columns[i]) return;
        try {
            const AudioClip clip = read_wav_file(c.audio_dir / (rows[i].source_id + ".wav"));
            const MelSpectrogram spec =
                minmax_normalize(resize_columns(mel_spectrogram(clip, c.mel), target, c.mel.resize));
            write_spec(spec, out_dir / (rows[i].source_id + ".mspc"));
        } catch (const std::exception& e) {
            failures[i] = e.what();
            columns[i].reset();
        }
    });

    std::vector<ManifestRow> written;
    auto report = open_out(out_dir / "resize_report.csv");
    report << "source_id,original_cols,target_cols\n";
    std::size_t failed = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!columns[i]) {
            err << "unreadable: " << rows[i].source_id << ": " << failures[i] << '\n';
            ++failed;
            continue;
        }
        written.push_back(rows[i]);
        report << rows[i].source_id << ',' << *columns[i] << ',' << target << '\n';
    }
    auto manifest = open_out(out_dir / "manifest.csv");
    write_manifest(manifest, written);
    out << "wrote " << written.size() << " spectrograms (" << c.mel.n_mels << "x" << target << ") to "
        << out_dir.string() << '\n';
    if (failed) {
        err << failed << " recording(s) failed\n";
        return kDataError;
    }
    return kOk;
}

// -------------------------------------------------------------- experiment

std::string two_digits(std::size_t n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", n);
    return buf;
}

int cmd_experiment(const RunConfig& c, const fs::path& data_dir, const fs::path& out_dir, bool save_models,
                   std::ostream& out) {
    std::string scheme_name = c.scheme;
    if (scheme_name.empty()) {
        std::ifstream in(data_dir / "manifest.csv");
        if (!in) throw UsageError("no featurized data: " + (data_dir / "manifest.csv").string() + " not found");
        const auto rows = read_manifest(in);
        if (rows.empty()) throw DataError("featurized manifest is empty");
        scheme_name = rows.front().scheme;
    }
    const LabelScheme scheme = LabelScheme::parse(scheme_name);
    const eval::ExperimentConfig config = experiment_config(c);
    const LabeledDataset data = load_featurized(data_dir, scheme);

    const eval::ExperimentResult result = eval::run_experiment(data, config);

    const std::string tag = std::string(scheme.name()) + "_" + std::string(eval::to_string(config.configuration)) +
                            (config.protocol == eval::Protocol::Paper ? "_paper" : "");
    fs::create_directories(out_dir);
    open_out(out_dir / ("result_" + tag + ".json")) << eval::to_json(result);
    for (const auto& f : result.folds) {
        const std::string suffix = tag + "_fold" + two_digits(f.fold);
        open_out(out_dir / ("cm_" + suffix + ".csv")) << f.confusion.to_csv();
        open_out(out_dir / ("history_" + suffix + ".csv")) << f.history_csv;
        if (save_models) nn::write_checkpoint(f.model, out_dir / ("model_" + suffix + ".pmdl"));
    }

    out << eval::to_string(config.configuration) << " / " << scheme.name() << " / protocol "
        << eval::to_string(config.protocol) << " / " << eval::to_string(config.split) << " / seed " << config.seed
        << '\n';
    out << eval::format_fold_table(result);
    out << "mean accuracy " << std::fixed << std::setprecision(6) << result.mean_accuracy << '\n';
    out << "results written to " << out_dir.string() << '\n';
    return kOk;
}

// ------------------------------------------------------------------ report

int cmd_report(const fs::path& dir, std::ostream& out) {
    if (!fs::is_directory(dir)) throw UsageError("results directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("result_") && name.ends_with(".json"))
            files.push_back(entry.path());
    }
    if (files.empty()) throw DataError("no result files found in " + dir.string());
    std::sort(files.begin(), files.end());

    std::vector<eval::ExperimentResult> results;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            results.push_back(eval::from_json(buf.str()));
        } catch (const std::exception& e) {
            throw DataError(f.filename().string() + ": " + e.what());
        }
    }
    auto scheme_rank = [](const std::string& s) { return s == "ternary" ? 0 : 1; };
    std::stable_sort(results.begin(), results.end(), [&](const auto& a, const auto& b) {
        return std::tuple(scheme_rank(a.scheme), a.scheme, a.configuration, a.protocol) <
               std::tuple(scheme_rank(b.scheme), b.scheme, b.configuration, b.protocol);
    });
    auto label = [](const eval::ExperimentResult& r) {
        std::string s(eval::to_string(r.configuration));
        if (r.protocol == eval::Protocol::Paper) s += " (paper protocol)";
        return s;
    };

    std::string current;
    for (const auto& r : results) {
        if (r.scheme != current) {
            out << (current.empty() ? "" : "\n") << "[" << r.scheme << "]\n";
            out << std::left << std::setw(26) << "Configuration";
            for (const char* m : eval::kMetricNames) out << std::right << std::setw(13) << m;
            out << '\n';
            current = r.scheme;
        }
        out << std::left << std::setw(26) << label(r) << std::right << std::fixed << std::setprecision(6);
        for (double v : eval::as_vector(r.mean)) out << std::setw(13) << v;
        out << '\n';
    }

    out << "\nscheme,configuration,protocol,folds";
    for (const char* m : eval::kMetricNames) out << ',' << m;
    out << '\n';
    for (const auto& r : results) {
        out << r.scheme << ',' << eval::to_string(r.configuration) << ',' << eval::to_string(r.protocol) << ','
            << r.folds.size() << std::fixed << std::setprecision(6);
        for (double v : eval::as_vector(r.mean)) out << ',' << v;
        out << '\n';
    }
    return kOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    const RunConfig d;
    CLI::App app{"Respiratory sound classification with VAE-based data augmentation", "pulmo"};
    app.require_subcommand(1);

    Overrides o;
    std::string manifest_out = "manifest.csv";
    std::string manifest_in, features_out, data_dir, results_out, results_dir;
    bool save_models = false;

    auto* ingest = app.add_subcommand("ingest", "Label recordings and write a manifest");
    add_config(ingest, o);
    ingest->add_option("--audio-dir", o.audio_dir, "Directory of .wav recordings");
    ingest->add_option("--diagnoses", o.diagnoses, "patient_id/diagnosis table (tab or comma separated)");
    ingest->add_option("--scheme", o.scheme, "Label scheme: ternary | six")->default_str("ternary");
    ingest->add_option("--out", manifest_out, "Manifest output path")->capture_default_str();

    auto* featurize = app.add_subcommand("featurize", "Compute normalized, equal-width Mel spectrograms");
    add_config(featurize, o);
    featurize->add_option("--manifest", manifest_in, "Manifest written by ingest")->required();
    featurize->add_option("--audio-dir", o.audio_dir, "Directory of .wav recordings");
    featurize->add_option("--out", features_out, "Output directory")->default_str("<work_dir>/features");
    featurize->add_option("--sample-rate", o.sample_rate, "Resample rate (Hz)")->default_str(str(d.mel.target_sample_rate));
    featurize->add_option("--window-size", o.window_size, "STFT window (samples)")->default_str(str(d.mel.window_size));
    featurize->add_option("--hop", o.hop, "STFT hop (samples)")->default_str(str(d.mel.hop));
    featurize->add_option("--n-mels", o.n_mels, "Mel bands")->default_str(str(d.mel.n_mels));
    featurize->add_option("--fmin", o.fmin, "Lowest filter edge (Hz)")->default_str(str(d.mel.fmin));
    featurize->add_option("--fmax", o.fmax, "Highest filter edge (Hz)")->default_str(str(d.mel.fmax));
    featurize->add_option("--resize", o.resize, "Width equalization: interpolate | croppad")->default_str("interpolate");
    featurize->add_option("--jobs", o.jobs, "Worker threads")->default_str(str(d.jobs));

    auto* experiment = app.add_subcommand("experiment", "Cross-validate one balancing configuration");
    add_config(experiment, o);
    experiment->add_option("--data", data_dir, "Featurized data directory")->default_str("<work_dir>/features");
    experiment->add_option("--out", results_out, "Results directory")->default_str("<work_dir>/results");
    experiment->add_option("--method", o.method, "Balancing: none | weights | smote | adasyn | vae")
        ->default_str(d.method);
    experiment->add_option("--scheme", o.scheme, "Label scheme: ternary | six")->default_str("from data");
    experiment->add_option("--protocol", o.protocol, "default (balance training folds) | paper (balance, then split)")
        ->default_str(d.protocol);
    experiment->add_option("--split", o.split, "kfold | holdout")->default_str(d.split);
    experiment->add_option("--folds", o.folds, "Number of folds")->default_str(str(d.folds));
    experiment->add_flag("--save-models", save_models, "Write one PMDL checkpoint per fold");
    add_common(experiment, o, d);

    auto* report = app.add_subcommand("report", "Tabulate mean metrics of every result file");
    report->add_option("--results-dir", results_dir, "Directory holding result_*.json")->required();

    auto* config = app.add_subcommand("config", "Print the configuration file with every key");
    add_config(config, o);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "error: " << e.what() << '\n';
        return kUserError;
    }

    try {
        if (*ingest) return cmd_ingest(resolve(o), manifest_out, out, err);
        if (*featurize) {
            const RunConfig c = resolve(o);
            return cmd_featurize(c, manifest_in, features_out.empty() ? c.features_dir() : fs::path(features_out), out,
                                 err);
        }
        if (*experiment) {
            const RunConfig c = resolve(o);
            parse_method(c.method);
            return cmd_experiment(c, data_dir.empty() ? c.features_dir() : fs::path(data_dir),
                                  results_out.empty() ? c.results_dir() : fs::path(results_out), save_models, out);
        }
        if (*report) return cmd_report(results_dir, out);
        if (*config) {
            write_run_config(out, resolve(o));
            return kOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
    return kInternalError;
}

}  // namespace pulmo::cli
