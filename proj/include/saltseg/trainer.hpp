#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "saltseg/checkpoint.hpp"
#include "saltseg/dataset.hpp"
#include "saltseg/folds.hpp"
#include "saltseg/losses.hpp"
#include "saltseg/model.hpp"
#include "saltseg/transforms.hpp"

namespace saltseg {

struct TrainingConfig {
  int epochs = 200;         // T
  int cycle_len = 50;       // C, one snapshot per cycle
  double lr_max = 1e-3;
  double lr_min = 1e-4;
  int warmup_epochs = 50;   // BCE epochs before switching to Lovasz
  int batch_size = 32;
  std::uint64_t seed = 0;
  int rounds = 3;           // K
  double thresh = -std::numeric_limits<double>::infinity();
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double momentum = 0.9;
  double weight_decay = 1e-4;
  AugmentConfig augment;

  /// Throws ConfigError (T not divisible by C, warm-up longer than T, ...).
  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

/// Cyclic cosine annealing, updated once per epoch:
/// lr_min + (lr_max - lr_min) * (1 + cos(pi * (e mod C) / C)) / 2.
/// Throws DomainError unless 0 <= epoch < T.
double lr_at(int epoch, const TrainingConfig& config);

/// BCE during warm-up, Lovasz hinge afterwards.
LossKind loss_for_epoch(int epoch, const TrainingConfig& config);

/// Epochs at which snapshots are taken (e = C-1 mod C).
std::vector<int> snapshot_epochs(const TrainingConfig& config);

struct EpochLog {
  int epoch = 0;
  LossKind phase = LossKind::bce;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_map = 0.0;
};

struct Snapshot {
  ModelParameters params;
  int epoch = 0;
  int cycle = 0;
};

struct RunResult {
  std::vector<Snapshot> snapshots;
  std::vector<EpochLog> log;
  ModelParameters final_params;
};

struct RunContext {
  Geometry geometry;
  int round_tag = 1;
  int fold_tag = 0;
  std::string phase = "gt";
  /// Called after every epoch; used for progress reporting.
  std::function<void(const EpochLog&)> on_epoch;
};

/// Trains from `initial` on `train`, validating on `validation` (which must
/// carry masks and share no ids with `train`). Validation mAP is scored at the
/// source resolution after postprocess. Throws ConfigError for an empty or
/// leaking split and NumericalError on a non-finite loss.
RunResult train_run(const Dataset& train, const Dataset& validation, const TrainingConfig& config,
                    const RunContext& context, const ModelParameters& initial);

/// Fold-based convenience: trains on every fold except `fold`, validates on it.
RunResult train_run(const Dataset& dataset, const FoldAssignment& folds, int fold, const TrainingConfig& config,
                    const RunContext& context, const ModelParameters& initial);

/// Same mechanics as train_run, continuing from the previous phase's weights.
/// Throws CompatibilityError when `prior` was produced for another spec.
RunResult finetune_run(const SegmentationModelSpec& spec, const Dataset& train, const Dataset& validation,
                       const TrainingConfig& config, const RunContext& context, const ModelParameters& prior);

/// Fresh weights: random from `seed`, or the pretrained encoder plug-in.
ModelParameters fresh_parameters(const SegmentationModelSpec& spec, std::uint64_t seed);

/// CSV `epoch,phase,lr,train_loss,val_loss,val_map`.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);
std::vector<EpochLog> read_training_log(const std::filesystem::path& path);

/// (N,1,S,S) float tensor from preprocessed images.
torch::Tensor images_to_tensor(const std::vector<Image>& images);
torch::Tensor masks_to_tensor(const std::vector<Mask>& masks);

}  // namespace saltseg
