#include "saltseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/png_io.hpp"
#include "saltseg/rle.hpp"

namespace fs = std::filesystem;

namespace saltseg {

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::labeled: return "labeled";
    case SplitTag::unlabeled: return "unlabeled";
    case SplitTag::holdout: return "holdout";
  }
  return "?";
}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::ground_truth: return "ground_truth";
    case DatasetKind::pseudo: return "pseudo";
    case DatasetKind::mixed: return "mixed";
  }
  return "?";
}

Dataset::Dataset(std::vector<SeismicSample> samples, DatasetKind kind)
    : samples_(std::move(samples)), kind_(kind) {
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!index_.emplace(s.id, i).second) throw ValidationError("duplicate sample id '" + s.id + "'");
    if (s.mask) {
      if (s.mask->height() != s.image.height() || s.mask->width() != s.image.width())
        throw ShapeError("mask of '" + s.id + "' does not match its image size");
      if (!is_binary(*s.mask)) throw ValidationError("mask of '" + s.id + "' is not binary");
    } else if (kind_ == DatasetKind::ground_truth) {
      throw ValidationError("ground-truth sample '" + s.id + "' has no mask");
    }
  }
}

const SeismicSample& Dataset::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown sample id '" + id + "'");
  return samples_[it->second];
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.id);
  return out;
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
  std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  for (const auto& id : wanted)
    if (!contains(id)) throw LookupError("unknown sample id '" + id + "'");
  std::vector<SeismicSample> picked;
  for (const auto& s : samples_)
    if (wanted.count(s.id)) picked.push_back(s);
  return Dataset(std::move(picked), kind_);
}

Dataset merge(const Dataset& a, const Dataset& b) {
  std::vector<SeismicSample> all = a.samples();
  all.insert(all.end(), b.samples().begin(), b.samples().end());
  const auto kind = a.kind() == b.kind() ? a.kind() : DatasetKind::mixed;
  return Dataset(std::move(all), kind);
}

Grid<std::uint8_t> to_gray8(const Image& image) {
  Grid<std::uint8_t> out(image.height(), image.width());
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float v = std::clamp(src[i], 0.0f, 1.0f);
    dst[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image from_gray8(const Grid<std::uint8_t>& gray) {
  Image out(gray.height(), gray.width());
  auto src = gray.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

std::vector<std::pair<std::string, std::string>> read_label_csv(const fs::path& path) {
  auto table = read_csv(path, {"id", "rle_mask"});
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(table.rows.size());
  for (auto& row : table.rows) out.emplace_back(std::move(row[0]), std::move(row[1]));
  return out;
}

void write_label_csv(const fs::path& path, const std::map<std::string, Mask>& masks) {
  CsvTable table{{"id", "rle_mask"}, {}};
  for (const auto& [id, mask] : masks) table.rows.push_back({id, encode_rle(mask)});
  write_csv(path, table);
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  const fs::path image_dir = dir / "images";
  if (!fs::is_directory(image_dir)) throw IoError("missing image directory " + image_dir.string());

  auto load_image = [&](const std::string& id) {
    const fs::path file = image_dir / (id + ".png");
    if (!fs::exists(file)) throw IoError("missing image " + file.string());
    Image image = from_gray8(read_png_gray(file));
    if (image.height() != options.image_size || image.width() != options.image_size)
      throw ShapeError(file.string() + " is " + std::to_string(image.height()) + "x" +
                       std::to_string(image.width()) + ", expected " + std::to_string(options.image_size) +
                       "x" + std::to_string(options.image_size));
    return image;
  };

  std::vector<SeismicSample> samples;
  if (options.labels) {
    // Masks are taken verbatim, including the all-salt-as-empty convention.
    for (auto& [id, rle] : read_label_csv(*options.labels)) {
      SeismicSample s{id, load_image(id), decode_rle(rle, options.image_size, options.image_size),
                      options.split};
      samples.push_back(std::move(s));
    }
    return Dataset(std::move(samples), DatasetKind::ground_truth);
  }

  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") ids.insert(entry.path().stem().string());
  for (const auto& id : ids) samples.push_back({id, load_image(id), std::nullopt, options.split});
  // Image-only pools carry no labels of either kind.
  return Dataset(std::move(samples), DatasetKind::mixed);
}

void save_dataset(const Dataset& dataset, const fs::path& dir, const std::optional<fs::path>& labels) {
  fs::create_directories(dir / "images");
  std::map<std::string, Mask> masks;
  for (const auto& s : dataset.samples()) {
    write_png_gray(dir / "images" / (s.id + ".png"), to_gray8(s.image));
    if (s.mask) masks.emplace(s.id, *s.mask);
  }
  if (labels) write_label_csv(*labels, masks);
}

}  // namespace saltseg
