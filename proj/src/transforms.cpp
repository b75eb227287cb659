#include "saltseg/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "saltseg/errors.hpp"

namespace saltseg {

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

void require_square(int h, int w, int size, const char* what) {
  if (h != size || w != size)
    throw ShapeError(std::string(what) + " expects " + std::to_string(size) + "x" + std::to_string(size) +
                     " input, got " + std::to_string(h) + "x" + std::to_string(w));
}

float sample_bilinear(const Image& image, double y, double x) {
  const int h = image.height(), w = image.width();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = image(y0, x0) * (1 - fx) + image(y0, x1) * fx;
  const double bottom = image(y1, x0) * (1 - fx) + image(y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

}  // namespace

void Geometry::validate() const {
  if (source <= 0 || scaled <= 0 || padded <= 0) throw ConfigError("geometry sizes must be positive");
  if (scaled > padded) throw ConfigError("scaled size exceeds padded size");
  if ((padded - scaled) % 2 != 0) throw ConfigError("padding must split evenly between both sides");
  if (margin() >= scaled) throw ConfigError("reflection margin must be smaller than the scaled image");
}

Image resize_bilinear(const Image& image, int height, int width) {
  Image out(height, width);
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      out(r, c) = sample_bilinear(image, (r + 0.5) * sy - 0.5, (c + 0.5) * sx - 0.5);
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  Mask out(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(static_cast<int>((r + 0.5) * mask.height() / height), mask.height() - 1);
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(static_cast<int>((c + 0.5) * mask.width() / width), mask.width() - 1);
      out(r, c) = mask(sr, sc);
    }
  }
  return out;
}

template <typename T>
Grid<T> reflect_pad(const Grid<T>& grid, int margin) {
  Grid<T> out(grid.height() + 2 * margin, grid.width() + 2 * margin);
  for (int r = 0; r < out.height(); ++r) {
    const int sr = reflect_index(r - margin, grid.height());
    for (int c = 0; c < out.width(); ++c) out(r, c) = grid(sr, reflect_index(c - margin, grid.width()));
  }
  return out;
}

template <typename T>
Grid<T> crop(const Grid<T>& grid, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > grid.height() || left + width > grid.width())
    throw ShapeError("crop window outside the array");
  Grid<T> out(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out(r, c) = grid(top + r, left + c);
  return out;
}

template <typename T>
Grid<T> flip_horizontal(const Grid<T>& grid) {
  Grid<T> out(grid.height(), grid.width());
  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c) out(r, c) = grid(r, grid.width() - 1 - c);
  return out;
}

template Grid<float> reflect_pad(const Grid<float>&, int);
template Grid<std::uint8_t> reflect_pad(const Grid<std::uint8_t>&, int);
template Grid<float> crop(const Grid<float>&, int, int, int, int);
template Grid<std::uint8_t> crop(const Grid<std::uint8_t>&, int, int, int, int);
template Grid<float> flip_horizontal(const Grid<float>&);
template Grid<std::uint8_t> flip_horizontal(const Grid<std::uint8_t>&);

Image preprocess(const Image& image, const Geometry& geometry) {
  require_square(image.height(), image.width(), geometry.source, "preprocess");
  Image scaled = geometry.scaled == geometry.source ? image
                                                     : resize_bilinear(image, geometry.scaled, geometry.scaled);
  return geometry.margin() ? reflect_pad(scaled, geometry.margin()) : scaled;
}

Mask preprocess_mask(const Mask& mask, const Geometry& geometry) {
  require_square(mask.height(), mask.width(), geometry.source, "preprocess");
  Mask scaled = geometry.scaled == geometry.source ? mask
                                                    : resize_nearest(mask, geometry.scaled, geometry.scaled);
  return geometry.margin() ? reflect_pad(scaled, geometry.margin()) : scaled;
}

Grid<float> postprocess(const Grid<float>& prediction, const Geometry& geometry) {
  require_square(prediction.height(), prediction.width(), geometry.padded, "postprocess");
  const int m = geometry.margin();
  Grid<float> core = crop(prediction, m, m, geometry.scaled, geometry.scaled);
  if (geometry.scaled == geometry.source) return core;
  return resize_bilinear(core, geometry.source, geometry.source);
}

SeismicSample flip_sample(const SeismicSample& sample) {
  SeismicSample out = sample;
  out.image = flip_horizontal(sample.image);
  if (sample.mask) out.mask = flip_horizontal(*sample.mask);
  return out;
}

SeismicSample augment(const SeismicSample& sample, const AugmentConfig& config, Rng& rng) {
  SeismicSample out = sample;
  if (config.hflip && uniform01(rng) < config.hflip_probability) out = flip_sample(out);

  if (config.shift_scale) {
    const int h = out.image.height(), w = out.image.width();
    const double scale = uniform(rng, 1.0 - config.max_scale, 1.0 + config.max_scale);
    const double dy = uniform(rng, -config.max_shift, config.max_shift) * h;
    const double dx = uniform(rng, -config.max_shift, config.max_shift) * w;
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    Image image(h, w);
    std::optional<Mask> mask;
    if (out.mask) mask = Mask(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double sy = (r - cy - dy) / scale + cy;
        const double sx = (c - cx - dx) / scale + cx;
        const int ry = reflect_index(static_cast<int>(std::lround(sy)), h);
        const int rx = reflect_index(static_cast<int>(std::lround(sx)), w);
        const double by = sy < 0 || sy > h - 1 ? ry : sy;
        const double bx = sx < 0 || sx > w - 1 ? rx : sx;
        image(r, c) = sample_bilinear(out.image, by, bx);
        if (mask) (*mask)(r, c) = (*out.mask)(ry, rx);
      }
    }
    out.image = std::move(image);
    out.mask = std::move(mask);
  }

  if (config.intensity) {
    const double gain = uniform(rng, 1.0 - config.max_contrast, 1.0 + config.max_contrast);
    const double bias = uniform(rng, -config.max_brightness, config.max_brightness);
    for (auto& v : out.image.values())
      v = static_cast<float>(std::clamp(gain * (v - 0.5) + 0.5 + bias, 0.0, 1.0));
  }
  return out;
}

}  // namespace saltseg
