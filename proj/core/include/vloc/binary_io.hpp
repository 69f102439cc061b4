#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace vloc::detail {

inline void put_f32_le(std::ostream& os, double value) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
    const char bytes[4] = {static_cast<char>(bits & 0xffu), static_cast<char>((bits >> 8) & 0xffu),
                           static_cast<char>((bits >> 16) & 0xffu), static_cast<char>((bits >> 24) & 0xffu)};
    os.write(bytes, 4);
}

inline void write_f32_le(std::ostream& os, std::span<const double> values) {
    for (double v : values) put_f32_le(os, v);
}

/// Returns false on a short read.
inline bool read_f32_le(std::istream& is, std::span<double> out) {
    std::vector<unsigned char> buf(out.size() * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) return false;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return true;
}

inline double round_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

} // namespace vloc::detail
