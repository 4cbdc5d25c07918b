#include "pulmo/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "pulmo/error.hpp"

namespace pulmo {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

struct Format {
    std::uint16_t code = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

double decode_sample(std::span<const std::uint8_t> b, std::size_t at, const Format& fmt) {
    switch (fmt.bits) {
        case 8:
            return (static_cast<int>(b[at]) - 128) / 128.0;
        case 16:
            return static_cast<std::int16_t>(read_u16(b, at)) / 32768.0;
        case 24: {
            std::int32_t v = static_cast<std::int32_t>(b[at] | (b[at + 1] << 8) | (b[at + 2] << 16));
            if (v & 0x800000) v -= 0x1000000;
            return v / 8388608.0;
        }
        case 32: {
            const std::uint32_t raw = read_u32(b, at);
            if (fmt.code == kFormatFloat) {
                float f;
                std::memcpy(&f, &raw, sizeof f);
                if (!std::isfinite(f)) return 0.0;
                return std::clamp(static_cast<double>(f), -1.0, 1.0);
            }
            return static_cast<std::int32_t>(raw) / 2147483648.0;
        }
        default:
            throw DataError("unsupported codec");
    }
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE"))
        throw DataError("malformed header");

    std::optional<Format> fmt;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16 || body + size > bytes.size()) throw DataError("malformed header");
            Format f;
            f.code = read_u16(bytes, body);
            f.channels = read_u16(bytes, body + 2);
            f.sample_rate = read_u32(bytes, body + 4);
            f.bits = read_u16(bytes, body + 14);
            if (f.code == kFormatExtensible) {
                if (size < 40) throw DataError("malformed header");
                f.code = read_u16(bytes, body + 24);
            }
            fmt = f;
        } else if (tag_is(bytes, pos, "data")) {
            // Some writers leave a bogus size on the final chunk; clamp to the file.
            const std::size_t avail = bytes.size() - body;
            data = bytes.subspan(body, std::min<std::size_t>(size, avail));
            have_data = true;
            break;
        }
        const std::size_t next = body + size + (size & 1u);
        if (next <= pos || next > bytes.size()) break;
        pos = next;
    }

    if (!fmt || !have_data) throw DataError("malformed header");
    if (fmt->sample_rate == 0 || fmt->channels == 0) throw DataError("malformed header");
    const bool integer_ok = fmt->code == kFormatPcm &&
                            (fmt->bits == 8 || fmt->bits == 16 || fmt->bits == 24 || fmt->bits == 32);
    const bool float_ok = fmt->code == kFormatFloat && fmt->bits == 32;
    if (!(integer_ok || float_ok) || fmt->channels > 2) throw DataError("unsupported codec");

    const std::size_t sample_bytes = fmt->bits / 8;
    const std::size_t frame_bytes = sample_bytes * fmt->channels;
    const std::size_t frames = data.size() / frame_bytes;
    if (frames == 0) throw DataError("zero-length data chunk");

    AudioClip clip;
    clip.sample_rate = fmt->sample_rate;
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < fmt->channels; ++c)
            sum += decode_sample(data, i * frame_bytes + c * sample_bytes, *fmt);
        clip.samples[i] = static_cast<float>(sum / fmt->channels);
    }
    return clip;
}

AudioClip read_wav_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        AudioClip clip = parse_wav(bytes);
        clip.source_id = path.stem().string();
        return clip;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav(std::span<const float> interleaved, std::uint32_t sample_rate,
                                     std::uint16_t channels, WavEncoding encoding) {
    std::uint16_t bits = 16;
    std::uint16_t code = kFormatPcm;
    switch (encoding) {
        case WavEncoding::Pcm8: bits = 8; break;
        case WavEncoding::Pcm16: bits = 16; break;
        case WavEncoding::Pcm24: bits = 24; break;
        case WavEncoding::Pcm32: bits = 32; break;
        case WavEncoding::Float32: bits = 32; code = kFormatFloat; break;
    }
    const std::uint32_t data_size = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, code);
    put_u16(out, channels);
    put_u32(out, sample_rate);
    put_u32(out, sample_rate * channels * (bits / 8));
    put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_size);

    for (float s : interleaved) {
        const double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
        switch (encoding) {
            case WavEncoding::Pcm8:
                out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v * 128.0) + 128, 0L, 255L)));
                break;
            case WavEncoding::Pcm16:
                put_u16(out, static_cast<std::uint16_t>(
                                 static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L))));
                break;
            case WavEncoding::Pcm24: {
                const std::int32_t q =
                    static_cast<std::int32_t>(std::clamp(std::lround(v * 8388608.0), -8388608L, 8388607L));
                const std::uint32_t u = static_cast<std::uint32_t>(q);
                out.push_back(static_cast<std::uint8_t>(u & 0xFF));
                out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
                out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
                break;
            }
            case WavEncoding::Pcm32: {
                const double scaled = std::clamp(v * 2147483648.0, -2147483648.0, 2147483647.0);
                put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(std::llround(scaled))));
                break;
            }
            case WavEncoding::Float32: {
                const float f = static_cast<float>(v);
                std::uint32_t raw;
                std::memcpy(&raw, &f, sizeof raw);
                put_u32(out, raw);
                break;
            }
        }
    }
    return out;
}

AudioClip resample_linear(const AudioClip& clip, double target_rate) {
    if (target_rate <= 0.0 || clip.sample_rate <= 0.0) throw UsageError("resample_linear: rates must be positive");
    if (clip.sample_rate == target_rate || clip.samples.empty()) {
        AudioClip copy = clip;
        copy.sample_rate = target_rate;
        return copy;
    }
    const std::size_t n = clip.samples.size();
    const double ratio = clip.sample_rate / target_rate;
    const auto out_len =
        static_cast<std::size_t>(std::floor(static_cast<double>(n - 1) * target_rate / clip.sample_rate)) + 1;

    AudioClip out;
    out.sample_rate = target_rate;
    out.source_id = clip.source_id;
    out.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double pos = static_cast<double>(i) * ratio;
        const auto left = std::min(static_cast<std::size_t>(pos), n - 1);
        const std::size_t right = std::min(left + 1, n - 1);
        const double frac = pos - static_cast<double>(left);
        out.samples[i] = static_cast<float>(clip.samples[left] + frac * (clip.samples[right] - clip.samples[left]));
    }
    return out;
}

}  // namespace pulmo
