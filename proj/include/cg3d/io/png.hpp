#pragma once

#include <filesystem>
#include <string>

#include "cg3d/render.hpp"

namespace cg3d::io {

/// 8-bit RGB PNG; channels are clamped to [0, 1] and rounded.
std::string encode_png(const Image& image);
Image decode_png(const std::string& bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace cg3d::io
