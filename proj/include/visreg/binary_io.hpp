#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace visreg::io {

// Little-endian primitives for the binary file formats. Readers throw
// IoError on a short read.

void write_magic(std::ostream& out, std::string_view magic);
/// Throws InvalidArgument when the next four bytes differ from `magic`.
void expect_magic(std::istream& in, std::string_view magic);

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);

/// Throws InvalidArgument unless the stream is at end of input.
void expect_eof(std::istream& in);

}  // namespace visreg::io
