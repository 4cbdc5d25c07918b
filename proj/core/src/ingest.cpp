#include "pulmo/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "pulmo/error.hpp"

namespace pulmo {

namespace {

std::string normalize(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t at = s.find(sep, start);
        if (at == std::string_view::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, at - start));
        start = at + 1;
    }
}

std::optional<int> parse_int(std::string_view s) {
    s = trim(s);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

constexpr std::array<std::pair<Diagnosis, std::string_view>, 8> kDiagnosisNames{{
    {Diagnosis::COPD, "COPD"},
    {Diagnosis::Asthma, "Asthma"},
    {Diagnosis::URTI, "URTI"},
    {Diagnosis::LRTI, "LRTI"},
    {Diagnosis::Bronchiectasis, "Bronchiectasis"},
    {Diagnosis::Pneumonia, "Pneumonia"},
    {Diagnosis::Bronchiolitis, "Bronchiolitis"},
    {Diagnosis::Healthy, "Healthy"},
}};

}  // namespace

std::string_view to_string(Diagnosis d) {
    for (const auto& [value, name] : kDiagnosisNames)
        if (value == d) return name;
    return "?";
}

std::optional<Diagnosis> parse_diagnosis(std::string_view text) {
    const std::string key = normalize(text);
    for (const auto& [value, name] : kDiagnosisNames)
        if (normalize(name) == key) return value;
    return std::nullopt;
}

RecordingMeta parse_filename(std::string_view name) {
    std::string_view stem = name;
    if (const auto slash = stem.find_last_of("/\\"); slash != std::string_view::npos) stem.remove_prefix(slash + 1);
    if (stem.size() > 4 && normalize(stem.substr(stem.size() - 4)) == ".wav") stem.remove_suffix(4);

    const auto fields = split(stem, '_');
    if (fields.size() != 5) throw DataError("wrong field count: " + std::string(name));

    RecordingMeta meta;
    const auto patient = parse_int(fields[0]);
    if (!patient) throw DataError("non-numeric patient id: " + std::string(name));
    meta.patient_id = *patient;
    meta.recording_index = std::string(fields[1]);

    static const std::map<std::string, ChestLocation> kLocations{
        {"tc", ChestLocation::Trachea},       {"al", ChestLocation::LeftAnterior},
        {"ar", ChestLocation::RightAnterior}, {"pl", ChestLocation::LeftPosterior},
        {"pr", ChestLocation::RightPosterior}, {"ll", ChestLocation::LeftLateral},
        {"lr", ChestLocation::RightLateral},
    };
    const auto loc = kLocations.find(normalize(fields[2]));
    if (loc == kLocations.end()) throw DataError("unknown chest location: " + std::string(name));
    meta.chest_location = loc->second;

    const std::string mode = normalize(fields[3]);
    if (mode == "sc") {
        meta.acquisition_mode = AcquisitionMode::SingleChannel;
    } else if (mode == "mc") {
        meta.acquisition_mode = AcquisitionMode::MultiChannel;
    } else {
        throw DataError("unknown acquisition mode: " + std::string(name));
    }
    meta.equipment = std::string(fields[4]);
    return meta;
}

DiagnosisTable load_diagnoses(std::string_view rows) {
    DiagnosisTable table;
    std::optional<char> sep;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= rows.size()) {
        std::size_t end = rows.find('\n', start);
        if (end == std::string_view::npos) end = rows.size();
        std::string_view line = trim(rows.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;

        if (!sep) sep = line.find('\t') != std::string_view::npos ? '\t' : ',';
        const auto fields = split(line, *sep);
        if (fields.size() != 2)
            throw DataError("diagnosis row " + std::to_string(line_no) + ": expected `patient_id" +
                            (*sep == '\t' ? std::string("<tab>") : std::string(",")) + "diagnosis`");

        const auto patient = parse_int(fields[0]);
        if (!patient) {
            if (table.empty() && normalize(fields[0]) == "patient_id") continue;
            throw DataError("diagnosis row " + std::to_string(line_no) + ": non-numeric patient id");
        }
        const auto diagnosis = parse_diagnosis(fields[1]);
        if (!diagnosis)
            throw DataError("unknown diagnosis \"" + std::string(trim(fields[1])) + "\" at row " +
                            std::to_string(line_no));
        if (!table.emplace(*patient, *diagnosis).second)
            throw DataError("duplicate patient id " + std::to_string(*patient));
    }
    return table;
}

DiagnosisTable load_diagnoses_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open diagnosis file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return load_diagnoses(buffer.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

LabelScheme LabelScheme::parse(std::string_view name) {
    const std::string key = normalize(name);
    if (key == "ternary" || key == "chronic") return LabelScheme(Scheme::Ternary);
    if (key == "six" || key == "sixclass" || key == "pathology") return LabelScheme(Scheme::SixClass);
    throw UsageError("unknown scheme \"" + std::string(name) + "\" (expected ternary|six)");
}

std::string_view LabelScheme::name() const { return variant_ == Scheme::Ternary ? "ternary" : "six"; }

const std::vector<std::string>& LabelScheme::class_names() const {
    static const std::vector<std::string> ternary{"chronic", "non-chronic", "healthy"};
    static const std::vector<std::string> six{"COPD", "pneumonia", "healthy", "URTI", "bronchiectasis", "bronchiolitis"};
    return variant_ == Scheme::Ternary ? ternary : six;
}

std::optional<std::size_t> LabelScheme::label_of(Diagnosis d) const {
    if (variant_ == Scheme::Ternary) {
        switch (d) {
            case Diagnosis::COPD:
            case Diagnosis::Bronchiectasis:
            case Diagnosis::Asthma:
                return 0;
            case Diagnosis::Pneumonia:
            case Diagnosis::URTI:
            case Diagnosis::Bronchiolitis:
            case Diagnosis::LRTI:
                return 1;
            case Diagnosis::Healthy:
                return 2;
        }
        return std::nullopt;
    }
    switch (d) {
        case Diagnosis::COPD: return 0;
        case Diagnosis::Pneumonia: return 1;
        case Diagnosis::Healthy: return 2;
        case Diagnosis::URTI: return 3;
        case Diagnosis::Bronchiectasis: return 4;
        case Diagnosis::Bronchiolitis: return 5;
        case Diagnosis::LRTI:
        case Diagnosis::Asthma:
            return std::nullopt;
    }
    return std::nullopt;
}

std::optional<std::size_t> LabelScheme::class_index(std::string_view class_name) const {
    const auto& names = class_names();
    const std::string key = normalize(class_name);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (normalize(names[i]) == key) return i;
    return std::nullopt;
}

std::vector<std::size_t> LabeledAudioSet::class_counts() const {
    std::vector<std::size_t> counts(scheme.num_classes(), 0);
    for (const auto& r : recordings) ++counts[r.label];
    return counts;
}

LabeledAudioSet build_dataset(const std::vector<std::string>& file_names, const std::filesystem::path& audio_dir,
                              const DiagnosisTable& diagnoses, const LabelScheme& scheme) {
    std::vector<std::string> names;
    for (const auto& n : file_names) {
        const std::filesystem::path p(n);
        if (normalize(p.extension().string()) == ".wav") names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());

    LabeledAudioSet set{scheme, {}, 0};
    for (const auto& name : names) {
        RecordingMeta meta = parse_filename(name);
        const auto it = diagnoses.find(meta.patient_id);
        if (it == diagnoses.end())
            throw DataError("no diagnosis entry for patient " + std::to_string(meta.patient_id) + " (" + name + ")");
        const auto label = scheme.label_of(it->second);
        if (!label) {
            ++set.dropped;
            continue;
        }
        const std::filesystem::path path = audio_dir / name;
        set.recordings.push_back({path.stem().string(), path, std::move(meta), *label});
    }
    return set;
}

LabeledAudioSet build_dataset(const std::filesystem::path& audio_dir, const DiagnosisTable& diagnoses,
                              const LabelScheme& scheme) {
    if (!std::filesystem::is_directory(audio_dir))
        throw DataError("audio directory not found: " + audio_dir.string());
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(audio_dir))
        if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    return build_dataset(names, audio_dir, diagnoses, scheme);
}

void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows, bool with_synthetic) {
    out << "source_id,patient_id,label,scheme";
    if (with_synthetic) out << ",synthetic";
    out << '\n';
    for (const auto& r : rows) {
        out << r.source_id << ',' << r.patient_id << ',' << r.label << ',' << r.scheme;
        if (with_synthetic) out << ',' << (r.synthetic ? "true" : "false");
        out << '\n';
    }
}

std::vector<ManifestRow> read_manifest(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("manifest is empty");
    const std::string_view header = trim(line);
    bool with_synthetic = false;
    if (header == "source_id,patient_id,label,scheme,synthetic") {
        with_synthetic = true;
    } else if (header != "source_id,patient_id,label,scheme") {
        throw DataError("manifest header mismatch: " + std::string(header));
    }
    std::vector<ManifestRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = trim(line);
        if (text.empty()) continue;
        const auto fields = split(text, ',');
        if (fields.size() != (with_synthetic ? 5u : 4u))
            throw DataError("manifest line " + std::to_string(line_no) + ": wrong field count");
        ManifestRow row;
        row.source_id = std::string(fields[0]);
        const auto patient = parse_int(fields[1]);
        if (!patient) throw DataError("manifest line " + std::to_string(line_no) + ": non-numeric patient id");
        row.patient_id = *patient;
        row.label = std::string(fields[2]);
        row.scheme = std::string(fields[3]);
        if (with_synthetic) row.synthetic = fields[4] == "true";
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ManifestRow> manifest_rows(const LabeledAudioSet& set) {
    std::vector<ManifestRow> rows;
    rows.reserve(set.recordings.size());
    for (const auto& r : set.recordings)
        rows.push_back({r.source_id, r.meta.patient_id, set.scheme.class_names()[r.label],
                        std::string(set.scheme.name()), false});
    return rows;
}

}  // namespace pulmo
