#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace convflow::io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Strict decimal parse of the whole string.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, int& out);

}  // namespace convflow::io
