#pragma once

#include "qvlm/raster.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace qvlm {

/// Reads an 8-bit PNG (any color type is reduced to gray); value > 127 is foreground.
BinaryMask read_mask_png(const std::filesystem::path& path, std::string label = {});

/// Writes a single-channel 8-bit PNG with foreground as 255.
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

/// Raw little-endian float32 planes stored back to back (plane-major, row-major).
std::vector<Raster<float>> read_float_planes(const std::filesystem::path& path, int width,
                                             int height, int planes);
void write_float_planes(const std::vector<Raster<float>>& planes,
                        const std::filesystem::path& path);

}  // namespace qvlm
