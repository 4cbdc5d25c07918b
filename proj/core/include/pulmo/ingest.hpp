#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pulmo {

enum class Diagnosis { COPD, Asthma, URTI, LRTI, Bronchiectasis, Pneumonia, Bronchiolitis, Healthy };

std::string_view to_string(Diagnosis d);

/// Case- and whitespace-insensitive match against the eight known labels.
std::optional<Diagnosis> parse_diagnosis(std::string_view text);

enum class ChestLocation { Trachea, LeftAnterior, RightAnterior, LeftPosterior, RightPosterior, LeftLateral, RightLateral };

enum class AcquisitionMode { SingleChannel, MultiChannel };

struct RecordingMeta {
    int patient_id = 0;
    std::string recording_index;
    ChestLocation chest_location = ChestLocation::Trachea;
    AcquisitionMode acquisition_mode = AcquisitionMode::SingleChannel;
    std::string equipment;

    bool operator==(const RecordingMeta&) const = default;
};

/// Parses `{patient}_{index}_{location}_{mode}_{equipment}.wav`.
RecordingMeta parse_filename(std::string_view name);

/// patient id -> diagnosis, unique per patient.
using DiagnosisTable = std::map<int, Diagnosis>;

/// Rows `patient_id<sep>diagnosis`, separator tab or comma (detected from
/// the first data row, then required on every row). A leading
/// `patient_id,...` header row is skipped.
DiagnosisTable load_diagnoses(std::string_view rows);
DiagnosisTable load_diagnoses_file(const std::filesystem::path& path);

enum class Scheme { Ternary, SixClass };

/// Canonical class orders:
///   Ternary:  chronic, non-chronic, healthy
///   SixClass: COPD, pneumonia, healthy, URTI, bronchiectasis, bronchiolitis
class LabelScheme {
public:
    explicit LabelScheme(Scheme variant) : variant_(variant) {}

    static LabelScheme parse(std::string_view name);  // "ternary" | "six"

    Scheme variant() const { return variant_; }
    std::string_view name() const;
    std::size_t num_classes() const { return variant_ == Scheme::Ternary ? 3 : 6; }
    const std::vector<std::string>& class_names() const;
    std::size_t healthy_index() const { return 2; }

    /// Class index, or nullopt when the scheme excludes the diagnosis
    /// (SixClass drops LRTI and asthma).
    std::optional<std::size_t> label_of(Diagnosis d) const;

    std::optional<std::size_t> class_index(std::string_view class_name) const;

    bool operator==(const LabelScheme&) const = default;

private:
    Scheme variant_;
};

struct LabeledRecording {
    std::string source_id;
    std::filesystem::path path;
    RecordingMeta meta;
    std::size_t label = 0;
};

struct LabeledAudioSet {
    LabelScheme scheme{Scheme::Ternary};
    std::vector<LabeledRecording> recordings;  // sorted by source_id
    std::size_t dropped = 0;                   // excluded by the scheme

    std::vector<std::size_t> class_counts() const;
};

/// Labels every .wav file in audio_dir (non-recursive). Other files are
/// ignored. Throws DataError when a patient id is missing from the table.
LabeledAudioSet build_dataset(const std::filesystem::path& audio_dir, const DiagnosisTable& diagnoses,
                              const LabelScheme& scheme);

/// Same, over an explicit list of file names (order does not matter).
LabeledAudioSet build_dataset(const std::vector<std::string>& file_names, const std::filesystem::path& audio_dir,
                              const DiagnosisTable& diagnoses, const LabelScheme& scheme);

struct ManifestRow {
    std::string source_id;
    int patient_id = 0;
    std::string label;
    std::string scheme;
    bool synthetic = false;

    bool operator==(const ManifestRow&) const = default;
};

/// Header `source_id,patient_id,label,scheme`; with_synthetic appends a
/// `synthetic` column (used for augmented sets).
void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows, bool with_synthetic = false);
std::vector<ManifestRow> read_manifest(std::istream& in);

std::vector<ManifestRow> manifest_rows(const LabeledAudioSet& set);

}  // namespace pulmo
