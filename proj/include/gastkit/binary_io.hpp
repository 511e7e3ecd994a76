#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "gastkit/common.hpp"

// Little-endian primitives for the binary artifact formats.
namespace gastkit::binio {

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats assume a little-endian host");

template <typename T>
    requires std::is_arithmetic_v<T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T get(std::istream& in, std::string_view what) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw FormatError("truncated input while reading " + std::string(what));
    }
    return value;
}

inline void put_bytes(std::ostream& out, std::string_view bytes) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string get_bytes(std::istream& in, std::size_t n, std::string_view what) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw FormatError("truncated input while reading " + std::string(what));
    }
    return s;
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    const std::string got = get_bytes(in, magic.size(), "magic");
    if (got != magic) {
        throw FormatError("bad magic: expected '" + std::string(magic) + "'");
    }
}

}  // namespace gastkit::binio
