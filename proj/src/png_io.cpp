#include "saltseg/png_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

#include "saltseg/errors.hpp"

namespace saltseg {

namespace {

std::vector<std::uint8_t> read_with_format(const std::filesystem::path& path, std::uint32_t format,
                                           int& height, int& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw IoError("corrupt PNG " + path.string() + ": " + message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

void write_with_format(const std::filesystem::path& path, std::uint32_t format, int height, int width,
                       const void* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.format = format;
  image.height = static_cast<png_uint_32>(height);
  image.width = static_cast<png_uint_32>(width);
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

}  // namespace

Grid<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto buffer = read_with_format(path, PNG_FORMAT_GRAY, h, w);
  return Grid<std::uint8_t>(h, w, std::move(buffer));
}

void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& gray) {
  write_with_format(path, PNG_FORMAT_GRAY, gray.height(), gray.width(), gray.values().data());
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& rgb) {
  static_assert(sizeof(Rgb) == 3);
  write_with_format(path, PNG_FORMAT_RGB, rgb.height(), rgb.width(), rgb.values().data());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto buffer = read_with_format(path, PNG_FORMAT_RGB, h, w);
  RgbImage out(h, w);
  std::memcpy(out.values().data(), buffer.data(), buffer.size());
  return out;
}

}  // namespace saltseg
