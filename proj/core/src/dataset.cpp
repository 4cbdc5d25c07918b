#include "pulmo/dataset.hpp"

#include <fstream>

#include "pulmo/error.hpp"

namespace pulmo {

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(scheme.num_classes(), 0);
    for (const auto& s : samples) ++counts.at(s.label);
    return counts;
}

std::vector<std::size_t> LabeledDataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out{scheme, rows, cols, {}};
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(samples.at(i));
    return out;
}

void LabeledDataset::validate() const {
    for (const auto& s : samples) {
        if (s.features.size() != feature_size())
            throw DataError("sample " + s.id + " has " + std::to_string(s.features.size()) + " features, expected " +
                            std::to_string(feature_size()));
        if (s.label >= scheme.num_classes()) throw DataError("sample " + s.id + " label out of range");
    }
}

LabeledDataset load_featurized(const std::filesystem::path& dir, const LabelScheme& scheme) {
    const auto manifest_path = dir / "manifest.csv";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open " + manifest_path.string());
    const auto rows = read_manifest(in);

    LabeledDataset data{scheme, 0, 0, {}};
    for (const auto& row : rows) {
        if (LabelScheme::parse(row.scheme) != scheme)
            throw DataError(manifest_path.string() + ": manifest scheme \"" + row.scheme + "\" does not match \"" +
                            std::string(scheme.name()) + "\"");
        const auto label = scheme.class_index(row.label);
        if (!label) throw DataError(manifest_path.string() + ": unknown label \"" + row.label + "\"");
        const MelSpectrogram spec = read_spec(dir / (row.source_id + ".mspc"));
        if (data.samples.empty()) {
            data.rows = spec.rows();
            data.cols = spec.cols();
        } else if (spec.rows() != data.rows || spec.cols() != data.cols) {
            throw DataError(row.source_id + ".mspc: shape " + std::to_string(spec.rows()) + "x" +
                            std::to_string(spec.cols()) + " differs from " + std::to_string(data.rows) + "x" +
                            std::to_string(data.cols));
        }
        Sample s;
        s.id = row.source_id;
        s.patient_id = row.patient_id;
        s.label = *label;
        s.synthetic = row.synthetic;
        s.features = spec.values.values;
        data.samples.push_back(std::move(s));
    }
    return data;
}

void save_featurized(const LabeledDataset& data, const std::filesystem::path& dir, const std::string& manifest_name) {
    std::filesystem::create_directories(dir);
    std::vector<ManifestRow> rows;
    for (const auto& s : data.samples) {
        MelSpectrogram spec;
        spec.values.rows = data.rows;
        spec.values.cols = data.cols;
        spec.values.values = s.features;
        write_spec(spec, dir / (s.id + ".mspc"));
        rows.push_back({s.id, s.patient_id, data.scheme.class_names()[s.label], std::string(data.scheme.name()),
                        s.synthetic});
    }
    std::ofstream out(dir / manifest_name);
    if (!out) throw DataError("cannot write " + (dir / manifest_name).string());
    write_manifest(out, rows, true);
}

}  // namespace pulmo
