#include "saltseg/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "saltseg/errors.hpp"

namespace saltseg {

MosaicLayout parse_mosaic_layout(std::string_view text, int cell_size) {
  MosaicLayout layout;
  layout.cell_size = cell_size;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::optional<std::string>> row;
    std::string cell;
    std::istringstream cells(line);
    while (std::getline(cells, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t"));
      cell.erase(cell.find_last_not_of(" \t") + 1);
      if (cell.empty() || cell == "-")
        row.emplace_back(std::nullopt);
      else
        row.emplace_back(cell);
    }
    if (line.back() == ',') row.emplace_back(std::nullopt);
    if (!layout.grid.empty() && row.size() != layout.grid.front().size())
      throw FormatError("mosaic row " + std::to_string(layout.grid.size() + 1) + " has " +
                        std::to_string(row.size()) + " cells, expected " +
                        std::to_string(layout.grid.front().size()));
    layout.grid.push_back(std::move(row));
  }
  return layout;
}

Mask mask_boundary(const Mask& mask) {
  Mask out(mask.height(), mask.width());
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c)) continue;
      const bool edge = (r > 0 && !mask(r - 1, c)) || (r + 1 < mask.height() && !mask(r + 1, c)) ||
                        (c > 0 && !mask(r, c - 1)) || (c + 1 < mask.width() && !mask(r, c + 1));
      out(r, c) = edge ? 1 : 0;
    }
  return out;
}

RgbImage render_mosaic(const MosaicLayout& layout, const Dataset& dataset) {
  const int cell = layout.cell_size;
  RgbImage out(layout.rows() * cell, layout.cols() * cell, Rgb{0, 0, 0});
  for (int gr = 0; gr < layout.rows(); ++gr) {
    for (int gc = 0; gc < layout.cols(); ++gc) {
      const auto& id = layout.grid[static_cast<std::size_t>(gr)][static_cast<std::size_t>(gc)];
      if (!id) continue;
      const SeismicSample& sample = dataset.at(*id);
      if (sample.image.height() != cell || sample.image.width() != cell)
        throw ShapeError("patch '" + *id + "' is not " + std::to_string(cell) + "x" + std::to_string(cell));
      const Mask boundary = sample.mask ? mask_boundary(*sample.mask) : Mask(cell, cell);
      for (int r = 0; r < cell; ++r)
        for (int c = 0; c < cell; ++c) {
          auto& px = out(gr * cell + r, gc * cell + c);
          if (boundary(r, c)) {
            px = Rgb{255, 0, 0};
          } else {
            const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(sample.image(r, c), 0.0f, 1.0f) * 255.0f));
            px = Rgb{g, g, g};
          }
        }
    }
  }
  return out;
}

}  // namespace saltseg
