#pragma once

// Byte-level helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "d2nn/error.hpp"

namespace d2nn::detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::io, "write failed for " + path);
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    const unsigned char* take(std::size_t n) {
        if (bytes_.size() - pos_ < n)
            throw FormatError(FormatError::Kind::truncated,
                              name_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ", file has " + std::to_string(bytes_.size()) + ")");
        const unsigned char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32_be() {
        const unsigned char* p = take(4);
        return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
    }
    std::uint32_t u32_le() {
        const unsigned char* p = take(4);
        return (std::uint32_t(p[3]) << 24) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[1]) << 8) | p[0];
    }
    std::uint64_t u64_le() {
        const std::uint64_t lo = u32_le();
        return lo | (std::uint64_t(u32_le()) << 32);
    }
    std::uint8_t u8() { return *take(1); }
    float f32_le() { return std::bit_cast<float>(u32_le()); }
    double f64_le() { return std::bit_cast<double>(u64_le()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

inline void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}
inline void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int k = 3; k >= 0; --k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

inline void put_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
    put_u32_le(out, static_cast<std::uint32_t>(v));
    put_u32_le(out, static_cast<std::uint32_t>(v >> 32));
}
inline void put_f64_le(std::vector<unsigned char>& out, double v) { put_u64_le(out, std::bit_cast<std::uint64_t>(v)); }

}  // namespace d2nn::detail
