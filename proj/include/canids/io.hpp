#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace canids {

// Writes to a sibling temp file and renames it over `path`, so readers never observe a
// half-written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace canids
