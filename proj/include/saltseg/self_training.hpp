#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saltseg/dataset.hpp"
#include "saltseg/folds.hpp"
#include "saltseg/inference.hpp"
#include "saltseg/model.hpp"
#include "saltseg/trainer.hpp"

namespace saltseg {

struct PseudoLabel {
  Mask mask;
  double confidence = 0.0;  // mask_confidence of the soft ensemble output
};

struct PseudoLabelSet {
  int round = 0;
  std::map<std::string, PseudoLabel> entries;

  /// Pool samples carrying their pseudo masks; ids absent from the set are
  /// skipped. The result kind is `pseudo`.
  Dataset as_dataset(const Dataset& pool) const;
};

/// Ensemble-averaged probabilities binarized at 0.5; entries with confidence
/// below `thresh` are dropped. With `full_salt_as_empty`, an all-salt mask is
/// stored empty (the ground-truth labelling convention); off by default.
PseudoLabelSet generate_pseudo_labels(const Ensemble& ensemble, const Dataset& pool, double thresh, int round,
                                      bool full_salt_as_empty = false);

/// CSV `id,rle_mask,confidence`.
void write_pseudo_labels(const std::filesystem::path& path, const PseudoLabelSet& labels);
PseudoLabelSet read_pseudo_labels(const std::filesystem::path& path, int round, int height, int width);

enum class RoundMode { sequential, joint };

struct ArchitectureEntry {
  std::string name;
  SegmentationModelSpec spec;
};

struct SelfTrainingConfig {
  TrainingConfig training;
  std::vector<ArchitectureEntry> architectures;
  int n_folds = 5;
  RoundMode mode = RoundMode::sequential;
  bool tta = true;
  bool full_salt_as_empty = false;
  Geometry geometry;

  void validate() const;
  nlohmann::json to_json() const;
  static SelfTrainingConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

struct RoundState {
  int round = 0;
  std::vector<MemberRef> members;
  PseudoLabelSet pseudo_labels;
  std::optional<double> holdout_map;
  bool resumed = false;
};

struct SelfTrainingResult {
  std::vector<RoundState> rounds;
};

struct SelfTrainingInputs {
  Dataset labeled;
  FoldAssignment folds;
  Dataset pool;
  std::optional<Dataset> holdout;
};

/// Runs all rounds under `out_dir/rounds/<k>`. Every round starts from fresh
/// weights. With `resume`, completed rounds whose manifest carries the same
/// config hash are reused; a hash mismatch or a missing earlier round raises
/// OrchestrationError, as does starting over a non-empty layout without resume.
SelfTrainingResult run_self_training(const SelfTrainingInputs& inputs, const SelfTrainingConfig& config,
                                     const std::filesystem::path& out_dir, bool resume = false,
                                     const std::function<void(const std::string&)>& progress = {});

std::string to_string(RoundMode mode);

}  // namespace saltseg
