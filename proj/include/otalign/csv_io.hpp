#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "otalign/numerics.hpp"

namespace otalign {

// 17 significant digits, enough for doubles to round-trip bit-exactly.
std::string format_double(double value);
double parse_double(std::string_view cell);
long long parse_int(std::string_view cell);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view line, char sep);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);

// Header-less dense grid of comma-separated decimals.
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

} // namespace otalign
