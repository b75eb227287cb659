#pragma once

#include <string>
#include <string_view>

#include "saltseg/grid.hpp"

namespace saltseg {

// Competition run-length encoding: "start length" pairs, space separated,
// 1-indexed positions counted down columns first (column-major).

/// Throws FormatError on malformed/overlapping pairs and BoundsError when a
/// run extends past height*width.
Mask decode_rle(std::string_view rle, int height, int width);

/// Maximal runs in ascending order; the empty mask encodes to "".
/// Throws ValidationError for non-binary input.
std::string encode_rle(const Mask& mask);

}  // namespace saltseg
