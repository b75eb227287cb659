#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "saltseg/inference.hpp"
#include "saltseg/self_training.hpp"

namespace saltseg {

struct DataPaths {
  std::filesystem::path labeled_dir;
  std::filesystem::path labels;
  std::filesystem::path pool_dir;          // optional unlabeled pool
  std::filesystem::path holdout_dir;       // optional labelled holdout
  std::filesystem::path holdout_labels;
  std::filesystem::path folds;             // optional precomputed fold file
};

/// Whole-experiment configuration as one JSON document. Relative paths are
/// resolved against the directory of the file they were read from.
struct ExperimentConfig {
  DataPaths data;
  std::filesystem::path output_dir = "runs/default";
  bool deterministic = true;
  std::string device = "cpu";
  int threads = 1;
  SelfTrainingConfig self_training;
  AverageSpace average_space = AverageSpace::probability;
  std::filesystem::path prediction_cache;  // empty disables caching

  void validate() const;
  nlohmann::json to_json() const;
  /// Rejects unknown keys with ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  std::string hash() const;
};

/// Throws IoError when unreadable and ConfigError for malformed content.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Configuration for the synthetic desk-scale experiment rooted at `data_root`
/// (as written by `saltseg synth`): tiny-test model, 64x64 images, 2 folds,
/// T=8, C=4, K=2.
ExperimentConfig desk_scale_config(const std::filesystem::path& data_root, const std::filesystem::path& output_dir,
                                   std::uint64_t seed);

}  // namespace saltseg
