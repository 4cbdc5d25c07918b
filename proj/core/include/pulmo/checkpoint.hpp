#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pulmo/tensor.hpp"

namespace pulmo::nn {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

/// PMDL container: "PMDL", version 0x01, u32 entry count, then per entry
/// u32 name length, name bytes, u32 rank, rank x u32 extents and the
/// float32 payload. All integers and reals little-endian.
std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedArray> entries);
std::vector<NamedArray> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(std::span<const NamedArray> entries, const std::filesystem::path& path);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

template <typename T>
NamedArray to_named(std::string name, const Tensor<T>& tensor) {
    const auto v = tensor.data();
    return {std::move(name), tensor.shape(), std::vector<float>(v.begin(), v.end())};
}

template <typename T>
NamedArray to_named(std::string name, std::span<const T> values) {
    return {std::move(name), Shape{values.size()}, std::vector<float>(values.begin(), values.end())};
}

/// Finds an entry by name; DataError if missing or the size differs.
const NamedArray& find_entry(std::span<const NamedArray> entries, const std::string& name, std::size_t expected_size);

}  // namespace pulmo::nn
