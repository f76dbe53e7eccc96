#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "pdnet/error.hpp"

// Little-endian primitives shared by the dataset, feature and checkpoint
// containers. Bytes are assembled explicitly so files are portable across
// hosts regardless of native byte order.
namespace pdnet::bin {

inline void put_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename U>
void put_uint(std::ostream& out, U value) {
    std::array<unsigned char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    put_bytes(out, buf.data(), buf.size());
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_uint(out, v); }
inline void put_u16(std::ostream& out, std::uint16_t v) { put_uint(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put_uint(out, v); }
inline void put_u64(std::ostream& out, std::uint64_t v) { put_uint(out, v); }
inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void get_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) fail(ErrorKind::Data, "unexpected end of file");
}

template <typename U>
U get_uint(std::istream& in) {
    std::array<unsigned char, sizeof(U)> buf{};
    get_bytes(in, buf.data(), buf.size());
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return value;
}

inline std::uint8_t get_u8(std::istream& in) { return get_uint<std::uint8_t>(in); }
inline std::uint16_t get_u16(std::istream& in) { return get_uint<std::uint16_t>(in); }
inline std::uint32_t get_u32(std::istream& in) { return get_uint<std::uint32_t>(in); }
inline std::uint64_t get_u64(std::istream& in) { return get_uint<std::uint64_t>(in); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4]{};
    get_bytes(in, got, 4);
    for (int i = 0; i < 4; ++i) {
        if (got[i] != magic[i])
            fail(ErrorKind::MagicMismatch, std::string("bad magic, expected '") + magic + "'");
    }
}

inline void put_magic(std::ostream& out, const char (&magic)[5]) { put_bytes(out, magic, 4); }

}  // namespace pdnet::bin
