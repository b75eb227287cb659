#include "saltseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "saltseg/errors.hpp"
#include "saltseg/rng.hpp"
#include "saltseg/transforms.hpp"

namespace saltseg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double gaussian(Rng& rng) {
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Low-frequency random field in roughly [-1,1].
Image smooth_field(int size, int cells, Rng& rng) {
  Image coarse(cells, cells);
  for (auto& v : coarse.values()) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return resize_bilinear(coarse, size, size);
}

/// Sediment layers: near-horizontal sinusoidal bands with gentle undulation.
Image layered_background(int size, Rng& rng) {
  const double freq = uniform(rng, 3.0, 7.0) / size;
  const double phase = uniform(rng, 0.0, kTwoPi);
  const double tilt = uniform(rng, -0.3, 0.3);
  const double wave_amp = uniform(rng, 0.5, 2.5);
  const double wave_freq = uniform(rng, 0.5, 1.5) / size;
  const double wave_phase = uniform(rng, 0.0, kTwoPi);
  const double mean = uniform(rng, 0.38, 0.5);
  const double contrast = uniform(rng, 0.15, 0.25);
  Image out(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double depth = r + tilt * c + wave_amp * std::sin(kTwoPi * wave_freq * c + wave_phase);
      out(r, c) = static_cast<float>(mean + contrast * std::sin(kTwoPi * freq * depth + phase));
    }
  return out;
}

/// Star-shaped blob with a few random low harmonics on its radius.
Mask blob_mask(int size, Rng& rng) {
  Mask mask(size, size);
  const bool body_from_below = uniform01(rng) < 0.3;
  if (body_from_below) {
    // Large salt body entering from the bottom with an undulating top.
    const double level = uniform(rng, 0.3, 0.8) * size;
    const double amp = uniform(rng, 0.03, 0.15) * size;
    const double freq = uniform(rng, 0.5, 2.0) / size;
    const double phase = uniform(rng, 0.0, kTwoPi);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        mask(r, c) = r >= level + amp * std::sin(kTwoPi * freq * c + phase) ? 1 : 0;
  } else {
    const double cy = uniform(rng, 0.15, 0.85) * size;
    const double cx = uniform(rng, 0.15, 0.85) * size;
    const double radius = uniform(rng, 0.12, 0.4) * size;
    double amps[3], phases[3];
    for (int k = 0; k < 3; ++k) {
      amps[k] = uniform(rng, -0.18, 0.18);
      phases[k] = uniform(rng, 0.0, kTwoPi);
    }
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const double dy = r - cy, dx = c - cx;
        const double theta = std::atan2(dy, dx);
        double rad = radius;
        for (int k = 0; k < 3; ++k) rad *= 1.0 + amps[k] * std::cos((k + 2) * theta + phases[k]);
        mask(r, c) = std::hypot(dy, dx) <= rad ? 1 : 0;
      }
  }
  if (count_ones(mask) == 0) mask(size / 2, size / 2) = 1;
  return mask;
}

}  // namespace

Dataset generate_synthetic(int n, int image_size, std::uint64_t seed, const SyntheticOptions& options) {
  if (n <= 0) throw ConfigError("generate_synthetic needs n > 0");
  if (image_size < 8) throw ConfigError("synthetic image size must be at least 8");

  std::vector<SeismicSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i), 0x5a17));
    Image image = layered_background(image_size, rng);
    Mask mask(image_size, image_size);
    if (uniform01(rng) >= options.empty_fraction) {
      mask = blob_mask(image_size, rng);
      const Image chaos = smooth_field(image_size, std::max(2, image_size / 6), rng);
      const double salt_mean = uniform(rng, 0.55, 0.68);
      for (int r = 0; r < image_size; ++r)
        for (int c = 0; c < image_size; ++c)
          if (mask(r, c)) image(r, c) = static_cast<float>(salt_mean + 0.07 * chaos(r, c));
    }
    for (auto& v : image.values()) v = static_cast<float>(std::clamp(v + 0.04 * gaussian(rng), 0.0, 1.0));
    // Quantize as an 8-bit PNG round trip would.
    for (auto& v : image.values()) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;

    char id[64];
    std::snprintf(id, sizeof(id), "%s%05d", options.id_prefix.c_str(), i);
    SeismicSample sample{id, std::move(image), std::nullopt, options.split};
    if (options.with_masks) sample.mask = std::move(mask);
    samples.push_back(std::move(sample));
  }
  return Dataset(std::move(samples), options.with_masks ? DatasetKind::ground_truth : DatasetKind::mixed);
}

}  // namespace saltseg
