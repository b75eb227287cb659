#pragma once

#include "saltseg/dataset.hpp"
#include "saltseg/grid.hpp"
#include "saltseg/rng.hpp"

namespace saltseg {

/// Network-input geometry: a `source`-sized patch is resized to `scaled`
/// and reflection-padded to `padded` (equal margins on every side).
/// The default is the 101 -> 202 -> 256 competition geometry.
struct Geometry {
  int source = 101;
  int scaled = 202;
  int padded = 256;

  int margin() const noexcept { return (padded - scaled) / 2; }
  /// Throws ConfigError for impossible combinations.
  void validate() const;
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Bilinear resampling with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& image, int height, int width);
/// Nearest-neighbor resampling; keeps masks binary.
Mask resize_nearest(const Mask& mask, int height, int width);

template <typename T>
Grid<T> reflect_pad(const Grid<T>& grid, int margin);
template <typename T>
Grid<T> crop(const Grid<T>& grid, int top, int left, int height, int width);
template <typename T>
Grid<T> flip_horizontal(const Grid<T>& grid);

/// Throws ShapeError unless the input is geometry.source square.
Image preprocess(const Image& image, const Geometry& geometry = {});
Mask preprocess_mask(const Mask& mask, const Geometry& geometry = {});
/// Inverse of preprocess: crop the central `scaled` square and resample
/// bilinearly back to `source`. Throws ShapeError unless `padded` square.
Grid<float> postprocess(const Grid<float>& prediction, const Geometry& geometry = {});

struct AugmentConfig {
  bool hflip = true;
  double hflip_probability = 0.5;
  bool shift_scale = false;
  double max_shift = 0.0625;  // fraction of the side length
  double max_scale = 0.1;     // relative zoom in [1-s, 1+s]
  bool intensity = false;
  double max_brightness = 0.1;
  double max_contrast = 0.1;
};

/// Train-time augmentation; the identity when every option is disabled.
SeismicSample augment(const SeismicSample& sample, const AugmentConfig& config, Rng& rng);
SeismicSample flip_sample(const SeismicSample& sample);

}  // namespace saltseg
