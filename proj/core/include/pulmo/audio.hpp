#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pulmo {

/// Mono recording. Amplitudes lie in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    double sample_rate = 0.0;
    std::string source_id;
};

/// Decodes a RIFF/WAVE container (PCM 8/16/24/32-bit or IEEE float32,
/// one or two channels). Stereo is averaged to mono; integer PCM is scaled
/// by the type's maximum magnitude (so int16 -32768 maps to -1).
///
/// Throws DataError with "malformed header", "unsupported codec" or
/// "zero-length data chunk".
AudioClip parse_wav(std::span<const std::uint8_t> bytes);

AudioClip read_wav_file(const std::filesystem::path& path);

enum class WavEncoding { Pcm8, Pcm16, Pcm24, Pcm32, Float32 };

/// Encodes interleaved samples (frames * channels) into a WAVE file image.
/// Used to build fixtures and synthetic corpora.
std::vector<std::uint8_t> encode_wav(std::span<const float> interleaved, std::uint32_t sample_rate,
                                     std::uint16_t channels, WavEncoding encoding);

/// Linear-interpolation resampling. Output length is
/// floor((n - 1) * target / source) + 1; identity when the rates match.
AudioClip resample_linear(const AudioClip& clip, double target_rate);

}  // namespace pulmo
