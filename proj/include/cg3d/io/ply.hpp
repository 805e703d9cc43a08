#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cg3d/field.hpp"

namespace cg3d::io {

/// Binary little-endian splat layout: float32 x y z, scale_0..2 (log), rot_0..3 (w x y z),
/// opacity (logit), f_dc_0..2 (colour in [0, 1], stored as is).
std::string encode_gaussian_ply(std::span<const Gaussian> gaussians);
std::vector<Gaussian> decode_gaussian_ply(const std::string& bytes);

void write_gaussian_ply(const std::filesystem::path& path, std::span<const Gaussian> gaussians);
std::vector<Gaussian> read_gaussian_ply(const std::filesystem::path& path);

/// Point cloud from a PLY (x, y, z of the vertex element; ASCII or binary little-endian, any
/// numeric property type) or from whitespace-separated "x y z" lines otherwise.
std::vector<Vec3> read_points(const std::filesystem::path& path);

}  // namespace cg3d::io
