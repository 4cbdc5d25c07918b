#include "pulmo/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace pulmo::nn {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                                (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated payload");
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }
    void skip(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedArray> entries) {
    std::vector<std::uint8_t> out{'P', 'M', 'D', 'L', 0x01};
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.values.size() != numel(e.shape)) throw UsageError("checkpoint: entry " + e.name + " size/shape mismatch");
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        for (std::size_t d : e.shape) {
            if (d > std::numeric_limits<std::uint32_t>::max()) throw UsageError("checkpoint: extent overflow");
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        for (float f : e.values) {
            std::uint32_t raw;
            std::memcpy(&raw, &f, sizeof raw);
            put_u32(out, raw);
        }
    }
    return out;
}

std::vector<NamedArray> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 5 || std::memcmp(bytes.data(), "PMDL", 4) != 0) throw DataError("checkpoint: bad magic");
    if (bytes[4] != 0x01) throw DataError("checkpoint: unsupported version " + std::to_string(bytes[4]));
    Reader r(bytes.subspan(5));
    const std::uint32_t count = r.u32();
    std::vector<NamedArray> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray e;
        e.name = r.text(r.u32());
        const std::uint32_t rank = r.u32();
        r.need(static_cast<std::size_t>(rank) * 4);
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t extent = r.u32();
            e.shape.push_back(extent);
            n *= extent;
            if (n > (std::numeric_limits<std::uint32_t>::max())) throw DataError("checkpoint: dimension overflow");
        }
        r.need(static_cast<std::size_t>(n) * 4);
        e.values.resize(static_cast<std::size_t>(n));
        for (auto& f : e.values) {
            const std::uint32_t raw = r.u32();
            std::memcpy(&f, &raw, sizeof f);
        }
        entries.push_back(std::move(e));
    }
    if (!r.done()) throw DataError("checkpoint: trailing bytes");
    return entries;
}

void write_checkpoint(std::span<const NamedArray> entries, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(entries);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

const NamedArray& find_entry(std::span<const NamedArray> entries, const std::string& name, std::size_t expected_size) {
    for (const auto& e : entries) {
        if (e.name != name) continue;
        if (e.values.size() != expected_size)
            throw DataError("checkpoint: entry " + name + " has " + std::to_string(e.values.size()) +
                            " values, expected " + std::to_string(expected_size));
        return e;
    }
    throw DataError("checkpoint: missing entry " + name);
}

}  // namespace pulmo::nn
