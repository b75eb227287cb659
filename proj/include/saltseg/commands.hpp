#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "saltseg/config.hpp"
#include "saltseg/metrics.hpp"
#include "saltseg/self_training.hpp"

namespace saltseg {

/// Options shared by every subcommand.
struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::string> device;
  bool resume = false;
  /// The invoking command line, recorded in artifact manifests.
  std::vector<std::string> argv;
};

struct PrepareOptions {
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> labels;
  std::filesystem::path out_dir;
  int n_folds = 5;
  int image_size = 101;
};

/// Fold CSV (when labels are given) and `dataset_manifest.json` with counts
/// and an id-list hash.
nlohmann::json cmd_prepare(const PrepareOptions& options, const GlobalOptions& global, std::ostream& out);

struct SynthOptions {
  std::filesystem::path out_dir;
  int labeled = 200;
  int unlabeled = 800;
  int holdout = 100;
  int image_size = 64;
};

/// Writes labeled/, pool/ and holdout/ image sets plus a desk-scale
/// `config.json` whose output directory is `<out_dir>/run`.
void cmd_synth(const SynthOptions& options, const GlobalOptions& global, std::ostream& out);

/// Runs self-training from the config; prints one holdout line per round.
SelfTrainingResult cmd_selftrain(const GlobalOptions& global, std::ostream& out);

struct PredictOptions {
  std::string selector;
  std::optional<std::filesystem::path> input_dir;  // defaults to the holdout set
  std::filesystem::path out;
};

/// Ensemble prediction over `<input_dir>/images`, written as a submission CSV.
void cmd_predict(const PredictOptions& options, const GlobalOptions& global, std::ostream& out);

struct EvaluateOptions {
  std::optional<std::filesystem::path> predictions;  // submission CSV, or
  std::optional<std::string> selector;              // an ensemble from the config
  std::filesystem::path labels;
  std::optional<std::filesystem::path> data_dir;    // images for the selector path
  std::optional<std::filesystem::path> report;
  int image_size = 101;
};

/// Scores predictions against labels on their common ids. An empty
/// intersection is a DomainError rather than a zero score.
EvaluationReport cmd_evaluate(const EvaluateOptions& options, const GlobalOptions& global, std::ostream& out);

struct MosaicOptions {
  std::filesystem::path layout;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> labels;
  std::filesystem::path out;
  int image_size = 101;
};

void cmd_mosaic(const MosaicOptions& options, const GlobalOptions& global, std::ostream& out);

/// Process exit code for an exception: 1 validation, 2 I/O, 3 numerical.
int exit_code_for(const std::exception& error) noexcept;

}  // namespace saltseg
