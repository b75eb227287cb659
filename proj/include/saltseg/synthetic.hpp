#pragma once

#include <cstdint>
#include <string>

#include "saltseg/dataset.hpp"

namespace saltseg {

struct SyntheticOptions {
  double empty_fraction = 0.4;
  std::string id_prefix = "syn";
  SplitTag split = SplitTag::labeled;
  /// Drop masks (unlabeled pools still get generated from the same process).
  bool with_masks = true;
};

/// Layered-sediment textures with smooth salt bodies of a distinct chaotic
/// texture. Deterministic for a fixed seed.
Dataset generate_synthetic(int n, int image_size, std::uint64_t seed, const SyntheticOptions& options = {});

}  // namespace saltseg
