#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saltseg/dataset.hpp"
#include "saltseg/png_io.hpp"

namespace saltseg {

struct MosaicLayout {
  std::vector<std::vector<std::optional<std::string>>> grid;  // rows of cells
  int cell_size = 101;

  int rows() const noexcept { return static_cast<int>(grid.size()); }
  int cols() const noexcept { return grid.empty() ? 0 : static_cast<int>(grid.front().size()); }
};

/// One row per line, cells separated by commas; an empty cell or "-" marks a
/// missing patch. Throws FormatError for ragged rows.
MosaicLayout parse_mosaic_layout(std::string_view text, int cell_size = 101);

/// Gray patches tiled row-major; mask boundary pixels drawn in red, absent
/// cells left black. Throws LookupError for ids missing from the dataset.
RgbImage render_mosaic(const MosaicLayout& layout, const Dataset& dataset);

/// Mask pixels with at least one 4-neighbor outside the mask.
Mask mask_boundary(const Mask& mask);

}  // namespace saltseg
