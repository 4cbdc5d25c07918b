#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "pulmo/experiment.hpp"
#include "pulmo/melspec.hpp"

namespace pulmo::cli {

/// Everything a run can be configured with. Loaded from a sectioned
/// `key = value` file; command-line flags are applied on top.
struct RunConfig {
    std::filesystem::path audio_dir;
    std::filesystem::path diagnoses;
    std::filesystem::path work_dir = "work";

    MelConfig mel;

    std::string method = "vae";
    std::vector<std::size_t> targets;  // empty = scheme defaults
    std::size_t k_neighbors = 5;

    vae::TrainConfig vae;

    std::size_t cnn_epochs = 100;
    std::size_t cnn_batch_size = 16;
    double cnn_learning_rate = 1e-3;
    std::size_t cnn_patience = 10;
    double dropout = 0.5;

    std::string scheme;  // empty = taken from the data (ternary for ingest)
    std::string protocol = "default";
    std::string split = "kfold";
    std::size_t folds = 10;
    double test_fraction = 0.2;
    double validation_fraction = 0.1;
    bool stratified = true;
    bool patient_disjoint = false;

    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    std::filesystem::path features_dir() const { return work_dir / "features"; }
    std::filesystem::path results_dir() const { return work_dir / "results"; }
};

/// Parses the config text over `base`. Unknown sections or keys, duplicate
/// keys and ill-typed values throw UsageError naming the line.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// The full key set with current values, in the file format.
void write_run_config(std::ostream& out, const RunConfig& config);

eval::ExperimentConfig experiment_config(const RunConfig& config);

}  // namespace pulmo::cli
