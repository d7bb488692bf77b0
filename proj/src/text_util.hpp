#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

#include "visreg/error.hpp"

namespace visreg::text {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

inline std::uint64_t parse_u64(std::string_view s, std::size_t line) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(line, "expected an unsigned integer id, got '" + std::string(s) + "'");
    }
    return v;
}

inline double parse_double(std::string_view s, std::size_t line) {
    s = trim(s);
    if (s.size() > 1 && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(line, "expected a decimal number, got '" + std::string(s) + "'");
    }
    return v;
}

/// Shortest representation that reads back to the same double.
inline void write_double(std::ostream& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

}  // namespace visreg::text
