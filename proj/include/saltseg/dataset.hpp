#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "saltseg/grid.hpp"

namespace saltseg {

enum class SplitTag { labeled, unlabeled, holdout };
enum class DatasetKind { ground_truth, pseudo, mixed };

std::string_view to_string(SplitTag tag);
std::string_view to_string(DatasetKind kind);

struct SeismicSample {
  std::string id;
  Image image;
  std::optional<Mask> mask;
  SplitTag split = SplitTag::labeled;
};

/// Immutable ordered sample collection with unique ids.
/// A ground_truth dataset requires every sample to carry a mask.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<SeismicSample> samples, DatasetKind kind);

  DatasetKind kind() const noexcept { return kind_; }
  const std::vector<SeismicSample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Throws LookupError for unknown ids.
  const SeismicSample& at(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Samples whose ids are in `ids`, in dataset order.
  Dataset subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<SeismicSample> samples_;
  DatasetKind kind_ = DatasetKind::ground_truth;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Concatenation; the result kind is `mixed` unless both inputs share a kind.
Dataset merge(const Dataset& a, const Dataset& b);

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/images/<id>.png (8-bit gray) and an optional label CSV
// `id,rle_mask`. Gray values are normalized by /255.

/// id -> RLE string, preserving file order. Throws IoError / FormatError.
std::vector<std::pair<std::string, std::string>> read_label_csv(const std::filesystem::path& path);
void write_label_csv(const std::filesystem::path& path, const std::map<std::string, Mask>& masks);

struct LoadOptions {
  int image_size = 101;
  SplitTag split = SplitTag::labeled;
  /// Optional label CSV; when present only ids listed there are loaded and
  /// each gets its decoded mask.
  std::optional<std::filesystem::path> labels;
};

/// Throws IoError naming the offending file for unreadable or corrupt images
/// and ShapeError for images of the wrong size.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options);

/// Writes images/<id>.png and, when masks exist, a label CSV.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const std::optional<std::filesystem::path>& labels);

/// Image <-> 8-bit gray conversion used by the loaders (round(v*255)).
Grid<std::uint8_t> to_gray8(const Image& image);
Image from_gray8(const Grid<std::uint8_t>& gray);

}  // namespace saltseg
