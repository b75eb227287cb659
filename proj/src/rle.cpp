#include "saltseg/rle.hpp"

#include <charconv>
#include <cstdint>
#include <vector>

#include "saltseg/errors.hpp"

namespace saltseg {

namespace {

std::vector<std::int64_t> parse_tokens(std::string_view text) {
  std::vector<std::int64_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || text[i] == '\n')) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r' && text[j] != '\n') ++j;
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, value);
    if (ec != std::errc{} || ptr != text.data() + j)
      throw FormatError("bad RLE token '" + std::string(text.substr(i, j - i)) + "' at offset " +
                        std::to_string(i));
    if (value <= 0)
      throw FormatError("RLE values must be positive, got " + std::to_string(value) + " at offset " +
                        std::to_string(i));
    out.push_back(value);
    i = j;
  }
  return out;
}

}  // namespace

Mask decode_rle(std::string_view rle, int height, int width) {
  if (height <= 0 || width <= 0)
    throw ShapeError("mask dimensions must be positive");
  const auto tokens = parse_tokens(rle);
  if (tokens.size() % 2 != 0)
    throw FormatError("RLE has an odd number of values (" + std::to_string(tokens.size()) + ")");

  const std::int64_t total = static_cast<std::int64_t>(height) * width;
  std::vector<std::uint8_t> column_major(static_cast<std::size_t>(total), 0);
  for (std::size_t k = 0; k < tokens.size(); k += 2) {
    const std::int64_t start = tokens[k] - 1;
    const std::int64_t run = tokens[k + 1];
    if (start + run > total)
      throw BoundsError("run " + std::to_string(tokens[k]) + " " + std::to_string(run) +
                        " exceeds " + std::to_string(total) + " pixels");
    for (std::int64_t p = start; p < start + run; ++p) {
      if (column_major[static_cast<std::size_t>(p)])
        throw FormatError("overlapping runs at position " + std::to_string(p + 1));
      column_major[static_cast<std::size_t>(p)] = 1;
    }
  }

  Mask mask(height, width);
  for (std::int64_t p = 0; p < total; ++p)
    mask(static_cast<int>(p % height), static_cast<int>(p / height)) = column_major[static_cast<std::size_t>(p)];
  return mask;
}

std::string encode_rle(const Mask& mask) {
  if (!is_binary(mask)) throw ValidationError("encode_rle expects a binary mask");
  const int h = mask.height();
  const std::int64_t total = static_cast<std::int64_t>(h) * mask.width();

  std::string out;
  std::int64_t run_start = -1;
  auto flush = [&](std::int64_t end) {
    if (!out.empty()) out += ' ';
    out += std::to_string(run_start + 1);
    out += ' ';
    out += std::to_string(end - run_start);
    run_start = -1;
  };
  for (std::int64_t p = 0; p < total; ++p) {
    const bool on = mask(static_cast<int>(p % h), static_cast<int>(p / h)) != 0;
    if (on && run_start < 0) run_start = p;
    if (!on && run_start >= 0) flush(p);
  }
  if (run_start >= 0) flush(total);
  return out;
}

}  // namespace saltseg
