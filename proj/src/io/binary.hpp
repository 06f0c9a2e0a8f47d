#pragma once

// Little-endian scalar encoding shared by the checkpoint and volume formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "raunet/tensor.hpp"

namespace raunet::io {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void get_bytes(std::istream& in, char* dst, std::size_t n, const std::string& what) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw DataError("truncated file while reading " + what);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    get_bytes(in, reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& in, const std::string& what) { return std::bit_cast<float>(get_u32(in, what)); }

inline void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& what, std::uint32_t max_length = 1u << 16) {
    const std::uint32_t n = get_u32(in, what + " length");
    if (n > max_length) throw DataError(what + " length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    get_bytes(in, s.data(), n, what);
    return s;
}

// Bulk f32 payloads; byte-swapped only on big-endian hosts.
inline void put_f32_array(std::ostream& out, const float* v, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        for (std::size_t i = 0; i < n; ++i) put_f32(out, v[i]);
    }
}

inline void get_f32_array(std::istream& in, float* v, std::size_t n, const std::string& what) {
    if constexpr (std::endian::native == std::endian::little) {
        get_bytes(in, reinterpret_cast<char*>(v), n * sizeof(float), what);
    } else {
        for (std::size_t i = 0; i < n; ++i) v[i] = get_f32(in, what);
    }
}

}  // namespace raunet::io
