#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "saltseg/grid.hpp"

namespace saltseg {

using Rgb = std::array<std::uint8_t, 3>;
using RgbImage = Grid<Rgb>;

/// Any PNG is converted to 8-bit gray. Throws IoError naming the file.
Grid<std::uint8_t> read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& gray);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& rgb);
RgbImage read_png_rgb(const std::filesystem::path& path);

}  // namespace saltseg
