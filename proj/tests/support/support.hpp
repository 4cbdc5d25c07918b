#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pulmo/audio.hpp"
#include "pulmo/dataset.hpp"
#include "pulmo/rng.hpp"
#include "pulmo/tensor.hpp"

namespace testing {

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "pulmo") {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(rd()) + "_" + std::to_string(++counter));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
pulmo::nn::Tensor<T> random_tensor(pulmo::nn::Shape shape, pulmo::Rng& rng, double scale = 1.0,
                                   bool requires_grad = true) {
    std::vector<T> v(pulmo::nn::numel(shape));
    for (auto& x : v) x = static_cast<T>(scale * rng.normal());
    return pulmo::nn::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is ~0 from turning rounding noise into a huge ratio.
inline double relative_error(double a, double n, double floor = 1e-3) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Compares analytic gradients (already accumulated on `params`) against
// central differences of `loss` (which must not record on a tape). Returns
// the largest relative error over every entry of every parameter.
inline double max_gradient_error(std::vector<pulmo::nn::Tensor<double>>& params,
                                 const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (auto& p : params) {
        auto values = p.data();
        const auto grad = p.grad();
        std::vector<double> analytic(grad.begin(), grad.end());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = loss();
            values[i] = saved - h;
            const double down = loss();
            values[i] = saved;
            worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

// Three well-separated classes of spectrogram-like images: each class puts
// a bright horizontal band at its own frequency range over low noise.
inline pulmo::LabeledDataset toy_dataset(std::vector<std::size_t> per_class, std::size_t rows, std::size_t cols,
                                         std::uint64_t seed) {
    pulmo::LabeledDataset data{pulmo::LabelScheme(pulmo::Scheme::Ternary), rows, cols, {}};
    pulmo::Rng rng(seed);
    int patient = 100;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const std::size_t band = rows / per_class.size();
        for (std::size_t i = 0; i < per_class[c]; ++i) {
            pulmo::Sample s;
            s.id = "toy_c" + std::to_string(c) + "_" + std::to_string(i);
            s.patient_id = patient++;
            s.label = c;
            s.features.resize(rows * cols);
            const double phase = rng.uniform() * 6.283185307179586;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t t = 0; t < cols; ++t) {
                    double v = 0.15 * rng.uniform();
                    if (r >= c * band && r < (c + 1) * band)
                        v += 0.6 + 0.2 * std::sin(phase + 0.3 * static_cast<double>(t));
                    s.features[r * cols + t] = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            data.samples.push_back(std::move(s));
        }
    }
    return data;
}

// Writes a corpus with the ICBHI per-diagnosis recording counts (920 short
// clips over 126 patients) and its diagnosis table. Returns the table path.
inline std::filesystem::path write_standin_corpus(const std::filesystem::path& audio_dir,
                                                  std::size_t samples_per_clip = 64) {
    struct Group {
        const char* diagnosis;
        int recordings;
        int patients;
    };
    const Group groups[] = {{"COPD", 793, 64},   {"Bronchiectasis", 16, 7}, {"Asthma", 1, 1},
                            {"Pneumonia", 37, 6}, {"URTI", 23, 14},         {"Bronchiolitis", 13, 6},
                            {"LRTI", 2, 2},       {"Healthy", 35, 26}};
    const char* locations[] = {"Tc", "Al", "Ar", "Pl", "Pr", "Ll", "Lr"};
    std::filesystem::create_directories(audio_dir);
    std::string table;
    int patient = 101;
    pulmo::Rng rng(2020);
    std::vector<float> clip(samples_per_clip);
    for (const auto& g : groups) {
        for (int p = 0; p < g.patients; ++p) table += std::to_string(patient + p) + "\t" + g.diagnosis + "\n";
        for (int r = 0; r < g.recordings; ++r) {
            const int id = patient + r % g.patients;
            for (auto& v : clip) v = static_cast<float>(0.5 * (rng.uniform() - 0.5));
            const std::string name = std::to_string(id) + "_" + std::to_string(r / g.patients + 1) + "b1_" +
                                     locations[r % 7] + (r % 3 == 0 ? "_mc_" : "_sc_") + "Meditron.wav";
            const auto bytes = pulmo::encode_wav(clip, 4000, 1, pulmo::WavEncoding::Pcm16);
            std::ofstream out(audio_dir / name, std::ios::binary);
            out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        }
        patient += g.patients;
    }
    const auto table_path = audio_dir.parent_path() / "diagnoses.txt";
    write_text(table_path, table);
    return table_path;
}

}  // namespace testing
