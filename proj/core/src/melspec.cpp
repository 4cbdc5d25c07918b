#include "pulmo/melspec.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>

#include "pulmo/error.hpp"

namespace pulmo {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(double* p) const { fftw_free(p); }
    void operator()(fftw_complex* p) const { fftw_free(p); }
};

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_.reset(fftw_alloc_real(n));
        out_.reset(fftw_alloc_complex(n / 2 + 1));
        std::lock_guard lock(fftw_plan_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard lock(fftw_plan_mutex());
        fftw_destroy_plan(plan_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_.get(); }
    const fftw_complex* output() const { return out_.get(); }
    void execute() { fftw_execute(plan_); }

private:
    std::size_t n_;
    std::unique_ptr<double[], FftwDeleter> in_;
    std::unique_ptr<fftw_complex[], FftwDeleter> out_;
    fftw_plan plan_ = nullptr;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

constexpr std::size_t kSpecHeaderBytes = 13;

}  // namespace

void MelConfig::validate() const {
    if (target_sample_rate <= 0.0) throw UsageError("melspec: target_sample_rate must be positive");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= target_sample_rate / 2.0))
        throw UsageError("melspec: need 0 <= fmin < fmax <= target_sample_rate/2");
    if (hop < 1) throw UsageError("melspec: hop must be >= 1");
    if (n_mels < 1) throw UsageError("melspec: n_mels must be >= 1");
    if (window_size < hop || window_size < 2) throw UsageError("melspec: window_size must be >= hop and >= 2");
    if (!(log_floor > 0.0)) throw UsageError("melspec: log_floor must be positive");
}

double hz_to_mel(double hz) {
    if (hz < 0.0) throw UsageError("hz_to_mel: negative frequency");
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

// n_mels + 2 edge frequencies; filter m spans edges m .. m+2.
std::vector<double> mel_edges_hz(const MelConfig& config) {
    const double lo = hz_to_mel(config.fmin);
    const double hi = hz_to_mel(config.fmax);
    const std::size_t n = config.n_mels + 2;
    std::vector<double> edges(n);
    for (std::size_t i = 0; i < n; ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& config) {
    config.validate();
    const auto edges = mel_edges_hz(config);
    return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(const MelConfig& config) {
    config.validate();
    const std::size_t bins = config.window_size / 2 + 1;
    const auto edges = mel_edges_hz(config);
    const double bin_hz = config.target_sample_rate / static_cast<double>(config.window_size);

    Matrix bank(config.n_mels, bins);
    std::vector<double> row(bins);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
        const double left = edges[m];
        const double center = edges[m + 1];
        const double right = edges[m + 2];
        double peak = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double w = 0.0;
            if (f > left && f < right) w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
            row[k] = w;
            peak = std::max(peak, w);
        }
        if (peak <= 0.0)
            throw UsageError("mel_filterbank: filter " + std::to_string(m) +
                             " has empty support (n_mels too large for the FFT resolution)");
        for (std::size_t k = 0; k < bins; ++k) bank(m, k) = static_cast<float>(row[k] / peak);
    }
    return bank;
}

std::size_t frame_count(std::size_t samples, const MelConfig& config) {
    if (samples < config.window_size) return 0;
    return (samples - config.window_size) / config.hop + 1;
}

Matrix stft_power(const AudioClip& clip, const MelConfig& config) {
    config.validate();
    const AudioClip audio = resample_linear(clip, config.target_sample_rate);
    const std::size_t frames = frame_count(audio.samples.size(), config);
    if (frames == 0)
        throw DataError("clip shorter than one window (" + std::to_string(audio.samples.size()) + " < " +
                        std::to_string(config.window_size) + " samples)");

    const std::size_t n = config.window_size;
    const std::size_t bins = n / 2 + 1;
    std::vector<double> window(n);
    for (std::size_t i = 0; i < n; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));

    RealFft fft(n);
    Matrix power(bins, frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const float* frame = audio.samples.data() + t * config.hop;
        double* in = fft.input();
        for (std::size_t i = 0; i < n; ++i) in[i] = window[i] * frame[i];
        fft.execute();
        const fftw_complex* out = fft.output();
        for (std::size_t k = 0; k < bins; ++k)
            power(k, t) = static_cast<float>(out[k][0] * out[k][0] + out[k][1] * out[k][1]);
    }
    return power;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelConfig& config) {
    const Matrix power = stft_power(clip, config);
    const Matrix bank = mel_filterbank(config);
    const std::size_t bins = power.rows;
    const std::size_t frames = power.cols;

    MelSpectrogram spec;
    spec.values = Matrix(config.n_mels, frames);
    std::vector<double> acc(frames);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < bins; ++k) {
            const double w = bank(m, k);
            if (w == 0.0) continue;
            const float* prow = &power.values[k * frames];
            for (std::size_t t = 0; t < frames; ++t) acc[t] += w * prow[t];
        }
        for (std::size_t t = 0; t < frames; ++t)
            spec.values(m, t) = static_cast<float>(10.0 * std::log10(acc[t] + config.log_floor));
    }
    return spec;
}

std::size_t mean_columns(std::span<const std::size_t> column_counts) {
    if (column_counts.empty()) throw UsageError("mean_columns: empty set");
    std::uint64_t sum = 0;
    for (std::size_t c : column_counts) sum += c;
    const std::uint64_t n = column_counts.size();
    // round half up: floor((2*sum + n) / (2n))
    return static_cast<std::size_t>((2 * sum + n) / (2 * n));
}

std::size_t mean_columns(std::span<const MelSpectrogram> specs) {
    std::vector<std::size_t> cols;
    cols.reserve(specs.size());
    for (const auto& s : specs) cols.push_back(s.cols());
    return mean_columns(cols);
}

MelSpectrogram resize_columns(const MelSpectrogram& spec, std::size_t target, ResizeMode mode) {
    if (target < 1) throw UsageError("resize_columns: target must be >= 1");
    const std::size_t cols = spec.cols();
    if (cols == target) return spec;
    if (cols == 0) throw DataError("resize_columns: spectrogram has no columns");

    MelSpectrogram out;
    out.normalized = spec.normalized;
    out.values = Matrix(spec.rows(), target);

    if (mode == ResizeMode::CropPad) {
        const float fill = *std::min_element(spec.values.values.begin(), spec.values.values.end());
        for (std::size_t r = 0; r < spec.rows(); ++r)
            for (std::size_t c = 0; c < target; ++c) out.values(r, c) = c < cols ? spec.values(r, c) : fill;
        return out;
    }

    const double scale = target > 1 ? static_cast<double>(cols - 1) / static_cast<double>(target - 1) : 0.0;
    for (std::size_t c = 0; c < target; ++c) {
        const double pos = static_cast<double>(c) * scale;
        const auto left = std::min(static_cast<std::size_t>(pos), cols - 1);
        const std::size_t right = std::min(left + 1, cols - 1);
        const double frac = pos - static_cast<double>(left);
        for (std::size_t r = 0; r < spec.rows(); ++r) {
            const double a = spec.values(r, left);
            const double b = spec.values(r, right);
            out.values(r, c) = static_cast<float>(frac == 0.0 ? a : a + frac * (b - a));
        }
    }
    return out;
}

MelSpectrogram minmax_normalize(const MelSpectrogram& spec) {
    MelSpectrogram out = spec;
    out.normalized = true;
    auto& v = out.values.values;
    if (v.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        std::fill(v.begin(), v.end(), 0.0f);
        return out;
    }
    const double range = hi - lo;
    for (float& x : v) x = static_cast<float>(std::clamp((x - lo) / range, 0.0, 1.0));
    return out;
}

std::vector<std::uint8_t> encode_spec(const MelSpectrogram& spec) {
    if (spec.rows() > std::numeric_limits<std::uint32_t>::max() || spec.cols() > std::numeric_limits<std::uint32_t>::max())
        throw UsageError("encode_spec: dimension overflow");
    std::vector<std::uint8_t> out;
    out.reserve(kSpecHeaderBytes + spec.values.values.size() * 4);
    out.insert(out.end(), {'M', 'S', 'P', 'C', 0x01});
    put_u32(out, static_cast<std::uint32_t>(spec.rows()));
    put_u32(out, static_cast<std::uint32_t>(spec.cols()));
    for (float f : spec.values.values) {
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        put_u32(out, raw);
    }
    return out;
}

MelSpectrogram decode_spec(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 5 || std::memcmp(bytes.data(), "MSPC", 4) != 0) throw DataError("bad magic");
    if (bytes[4] != 0x01) throw DataError("unsupported MELSPEC version " + std::to_string(bytes[4]));
    if (bytes.size() < kSpecHeaderBytes) throw DataError("truncated payload");
    const std::uint64_t rows = get_u32(bytes, 5);
    const std::uint64_t cols = get_u32(bytes, 9);
    const std::uint64_t count = rows * cols;
    if (count > (std::numeric_limits<std::uint64_t>::max() - kSpecHeaderBytes) / 4 ||
        count > std::numeric_limits<std::size_t>::max() / 4)
        throw DataError("dimension overflow");
    const std::uint64_t need = kSpecHeaderBytes + count * 4;
    if (bytes.size() < need) throw DataError("truncated payload");
    if (bytes.size() > need) throw DataError("trailing bytes after payload");

    MelSpectrogram spec;
    spec.values = Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t raw = get_u32(bytes, kSpecHeaderBytes + 4 * i);
        std::memcpy(&spec.values.values[i], &raw, sizeof raw);
    }
    const auto& v = spec.values.values;
    spec.normalized = std::all_of(v.begin(), v.end(), [](float x) { return x >= 0.0f && x <= 1.0f; });
    return spec;
}

void write_spec(const MelSpectrogram& spec, const std::filesystem::path& path) {
    const auto bytes = encode_spec(spec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

MelSpectrogram read_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_spec(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace pulmo
