#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pulmo/ingest.hpp"
#include "pulmo/melspec.hpp"

namespace pulmo {

/// One normalized spectrogram, flattened row-major, with its label and
/// provenance. Synthetic samples list the source ids they were derived from.
struct Sample {
    std::string id;
    int patient_id = -1;
    std::size_t label = 0;
    bool synthetic = false;
    std::vector<std::string> parents;
    std::vector<float> features;
};

/// Spectrograms of identical shape under one label scheme.
struct LabeledDataset {
    LabelScheme scheme{Scheme::Ternary};
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t feature_size() const { return rows * cols; }
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> labels() const;

    /// Copy of the selected samples, in the given order.
    LabeledDataset subset(std::span<const std::size_t> indices) const;

    /// Throws DataError unless every sample has rows*cols features and a
    /// label inside the scheme.
    void validate() const;
};

/// Reads `manifest.csv` plus one `<source_id>.mspc` per row from a
/// featurized directory. The manifest scheme must match `scheme`.
LabeledDataset load_featurized(const std::filesystem::path& dir, const LabelScheme& scheme);

/// Writes samples as MELSPEC files plus a manifest with a synthetic column.
void save_featurized(const LabeledDataset& data, const std::filesystem::path& dir,
                     const std::string& manifest_name = "manifest.csv");

}  // namespace pulmo
