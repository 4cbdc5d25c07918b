#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace pulmo {

/// Deterministic generator with named sub-streams.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the
/// standard. The real-valued draws are computed here instead of through
/// <random> distributions, which are implementation-defined, so sequences
/// match across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream derived from (seed, name, index).
    static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

    /// Sub-seed for a named stage; used to hand seeds to components.
    static std::uint64_t derive(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pulmo
