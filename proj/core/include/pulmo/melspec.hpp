#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pulmo/audio.hpp"

namespace pulmo {

/// Row-major real matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), values(r * c, fill) {}

    float& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

enum class ResizeMode { Interpolate, CropPad };

struct MelConfig {
    double target_sample_rate = 22050.0;
    std::size_t window_size = 2048;
    std::size_t hop = 512;
    std::size_t n_mels = 128;
    double fmin = 0.0;
    double fmax = 11025.0;
    double log_floor = 1e-10;
    ResizeMode resize = ResizeMode::Interpolate;

    /// Throws UsageError unless 0 <= fmin < fmax <= sr/2, hop >= 1,
    /// n_mels >= 1 and window_size >= hop.
    void validate() const;
};

/// Mel spectrogram; `rows` = n_mels, `cols` = frames.
struct MelSpectrogram {
    Matrix values;
    bool normalized = false;

    std::size_t rows() const { return values.rows; }
    std::size_t cols() const { return values.cols; }

    /// Compares the matrix only; the flag is not part of the file format.
    bool operator==(const MelSpectrogram& other) const { return values == other.values; }
};

/// m = 2595 log10(1 + f/700). Throws UsageError for f < 0.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Center frequencies (Hz) of the n_mels filters, equally spaced in mel
/// between hz_to_mel(fmin) and hz_to_mel(fmax) (edges excluded).
std::vector<double> mel_center_frequencies(const MelConfig& config);

/// n_mels x (window_size/2 + 1) triangular filters, each with unit peak.
/// Throws UsageError if any filter has no FFT bin in its support.
Matrix mel_filterbank(const MelConfig& config);

/// Hann-windowed power spectrogram |X|^2, (window_size/2 + 1) x frames with
/// frames = floor((len - window_size)/hop) + 1. The clip is resampled to the
/// target rate first. Throws DataError when shorter than one window.
Matrix stft_power(const AudioClip& clip, const MelConfig& config);

/// Frame count stft_power would produce for `samples` samples already at the
/// target rate (0 when shorter than a window).
std::size_t frame_count(std::size_t samples, const MelConfig& config);

/// 10 log10(filterbank * power + log_floor), unnormalized.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& config);

/// Nearest integer to the mean, halves rounded up. Exact integer arithmetic.
std::size_t mean_columns(std::span<const std::size_t> column_counts);
std::size_t mean_columns(std::span<const MelSpectrogram> specs);

/// Resamples every row to `target` columns. Interpolate: linear, with the
/// first and last columns pinned. CropPad: truncate, or pad on the right
/// with the matrix minimum.
MelSpectrogram resize_columns(const MelSpectrogram& spec, std::size_t target,
                              ResizeMode mode = ResizeMode::Interpolate);

/// (v - min)/(max - min) over the whole matrix; constant input -> zeros.
MelSpectrogram minmax_normalize(const MelSpectrogram& spec);

/// MELSPEC container: "MSPC", version 0x01, u32 rows, u32 cols, then
/// rows*cols float32, all little-endian, row-major.
std::vector<std::uint8_t> encode_spec(const MelSpectrogram& spec);
MelSpectrogram decode_spec(std::span<const std::uint8_t> bytes);

void write_spec(const MelSpectrogram& spec, const std::filesystem::path& path);
MelSpectrogram read_spec(const std::filesystem::path& path);

}  // namespace pulmo
