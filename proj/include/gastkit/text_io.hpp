#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gastkit/common.hpp"

namespace gastkit {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view field);
long long parse_int(std::string_view s, std::string_view field);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Matrix as comma-separated rows.
std::string matrix_to_csv(const Matrix& m);

}  // namespace gastkit
