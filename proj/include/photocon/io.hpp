#pragma once

#include <filesystem>

#include "photocon/grid.hpp"

namespace photocon {

/// 8-bit binary PGM; values in [0, 1] are scaled to 0..255 and clamped.
void write_pgm(const Image& image, const std::filesystem::path& path);
/// Reads binary PGM (P5) or PPM (P6); color is converted with 0.299/0.587/0.114 weights.
Image read_image(const std::filesystem::path& path);

/// Little-endian single-channel PFM (scale -1), rows stored bottom to top.
void write_pfm(const Grid<double>& map, const std::filesystem::path& path);
Grid<double> read_pfm(const std::filesystem::path& path);

}  // namespace photocon
