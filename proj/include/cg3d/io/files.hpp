#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cg3d::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, flushes it, then renames it over `path`. Readers see
/// either the old contents or the new ones, never a truncated file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws IoError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace cg3d::io
