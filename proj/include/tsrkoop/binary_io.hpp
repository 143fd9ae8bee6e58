#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tsrkoop::io {

/// Writes doubles as IEEE-754 binary64, little-endian, regardless of host order.
void write_f64_le(std::ostream& os, std::span<const double> values);
void read_f64_le(std::istream& is, std::span<double> values);

/// Shortest decimal text that parses back to the identical double.
std::string format_exact(double v);
double parse_double(const std::string& token, const std::string& context);
long long parse_int(const std::string& token, const std::string& context);

/// Reads the whole file into memory; throws IoError when it cannot be opened.
std::vector<char> read_file(const std::string& path);

}  // namespace tsrkoop::io
