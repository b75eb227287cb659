#include "saltseg/commands.hpp"

#include <cstdio>
#include <iomanip>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/folds.hpp"
#include "saltseg/hashing.hpp"
#include "saltseg/lock.hpp"
#include "saltseg/mosaic.hpp"
#include "saltseg/png_io.hpp"
#include "saltseg/rle.hpp"
#include "saltseg/selector.hpp"
#include "saltseg/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace saltseg {

namespace {

std::string id_list_hash(const std::vector<std::string>& ids) {
  std::uint64_t h = fnv1a64("");
  for (const auto& id : ids) {
    h = fnv1a64(id, h);
    h = fnv1a64("\n", h);
  }
  return to_hex(h);
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

/// Loads the config, applies command-line overrides and configures torch.
ExperimentConfig resolve_config(const GlobalOptions& global) {
  if (!global.config) throw ConfigError("--config is required for this command");
  ExperimentConfig config = load_experiment_config(*global.config);
  if (global.seed) config.self_training.training.seed = *global.seed;
  if (global.deterministic) config.deterministic = true;
  if (global.device) config.device = *global.device;
  config.validate();
  configure_runtime(config.deterministic, config.device, config.threads);
  return config;
}

Dataset load_images(const fs::path& dir, int size, SplitTag split, const fs::path& labels = {}) {
  LoadOptions options;
  options.image_size = size;
  options.split = split;
  if (!labels.empty()) options.labels = labels;
  return load_dataset(dir, options);
}

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

json cmd_prepare(const PrepareOptions& options, const GlobalOptions& global, std::ostream& out) {
  const std::uint64_t seed = global.seed.value_or(0);
  DirectoryLock lock(options.out_dir);
  const Dataset dataset = load_dataset(options.data_dir, LoadOptions{options.image_size, SplitTag::labeled, options.labels});
  const auto ids = dataset.ids();
  std::size_t labeled = 0;
  for (const auto& s : dataset.samples()) labeled += s.mask.has_value();

  json manifest{{"command", global.argv},
                {"data_dir", options.data_dir.string()},
                {"labels", options.labels ? json(options.labels->string()) : json(nullptr)},
                {"image_size", options.image_size},
                {"images", ids.size()},
                {"labeled", labeled},
                {"unlabeled", ids.size() - labeled},
                {"id_list_hash", id_list_hash(ids)},
                {"seed", seed}};
  if (options.labels) {
    const auto folds = make_folds(ids, options.n_folds, seed);
    write_fold_csv(options.out_dir / "folds.csv", folds);
    manifest["n_folds"] = options.n_folds;
    manifest["fold_sizes"] = folds.fold_sizes();
    manifest["fold_file"] = "folds.csv";
  }
  write_json(options.out_dir / "dataset_manifest.json", manifest);
  out << "prepared " << ids.size() << " images (" << labeled << " labeled) in " << options.out_dir.string() << "\n";
  return manifest;
}

void cmd_synth(const SynthOptions& options, const GlobalOptions& global, std::ostream& out) {
  const std::uint64_t seed = global.seed.value_or(0);
  DirectoryLock lock(options.out_dir);
  SyntheticOptions labeled{.id_prefix = "lab", .split = SplitTag::labeled};
  SyntheticOptions pool{.id_prefix = "pool", .split = SplitTag::unlabeled, .with_masks = false};
  SyntheticOptions holdout{.id_prefix = "hold", .split = SplitTag::holdout};
  save_dataset(generate_synthetic(options.labeled, options.image_size, mix_seed(seed, 1), labeled),
               options.out_dir / "labeled", options.out_dir / "labeled" / "labels.csv");
  if (options.unlabeled > 0)
    save_dataset(generate_synthetic(options.unlabeled, options.image_size, mix_seed(seed, 2), pool),
                 options.out_dir / "pool", std::nullopt);
  if (options.holdout > 0)
    save_dataset(generate_synthetic(options.holdout, options.image_size, mix_seed(seed, 3), holdout),
                 options.out_dir / "holdout", options.out_dir / "holdout" / "labels.csv");

  ExperimentConfig config = desk_scale_config(".", "run", seed);
  if (options.image_size != 64) {
    config.self_training.geometry = Geometry{options.image_size, options.image_size, options.image_size};
    config.self_training.architectures.front().spec = tiny_test_spec(options.image_size);
  }
  json j = config.to_json();
  j["data"] = {{"labeled_dir", "labeled"},
               {"labels", "labeled/labels.csv"},
               {"pool_dir", options.unlabeled > 0 ? "pool" : ""},
               {"holdout_dir", options.holdout > 0 ? "holdout" : ""},
               {"holdout_labels", options.holdout > 0 ? "holdout/labels.csv" : ""},
               {"folds", ""}};
  j["output_dir"] = "run";
  j["prediction_cache"] = "";
  write_json(options.out_dir / "config.json", j);
  write_json(options.out_dir / "synth_manifest.json",
             {{"command", global.argv},
              {"seed", seed},
              {"labeled", options.labeled},
              {"unlabeled", options.unlabeled},
              {"holdout", options.holdout},
              {"image_size", options.image_size}});
  out << "wrote synthetic data (" << options.labeled << " labeled, " << options.unlabeled << " unlabeled, "
      << options.holdout << " holdout) and config.json to " << options.out_dir.string() << "\n";
}

SelfTrainingResult cmd_selftrain(const GlobalOptions& global, std::ostream& out) {
  const ExperimentConfig config = resolve_config(global);
  const auto& st = config.self_training;
  const int size = st.geometry.source;

  SelfTrainingInputs inputs;
  inputs.labeled = load_images(config.data.labeled_dir, size, SplitTag::labeled, config.data.labels);
  if (!config.data.pool_dir.empty()) inputs.pool = load_images(config.data.pool_dir, size, SplitTag::unlabeled);
  if (!config.data.holdout_dir.empty())
    inputs.holdout = load_images(config.data.holdout_dir, size, SplitTag::holdout, config.data.holdout_labels);
  inputs.folds = config.data.folds.empty() ? make_folds(inputs.labeled.ids(), st.n_folds, st.training.seed)
                                           : read_fold_csv(config.data.folds);

  DirectoryLock lock(config.output_dir);
  write_json(config.output_dir / "run_manifest.json",
             {{"command", global.argv}, {"config", config.to_json()}, {"config_hash", config.hash()},
              {"self_training_hash", st.hash()}});
  write_fold_csv(config.output_dir / "folds.csv", inputs.folds);

  auto result = run_self_training(inputs, st, config.output_dir, global.resume,
                                  [&](const std::string& msg) { out << msg << "\n" << std::flush; });

  out << "\nround  holdout_mAP  delta\n";
  std::optional<double> prev;
  for (const auto& r : result.rounds) {
    out << std::left << std::setw(7) << r.round;
    if (r.holdout_map) {
      out << std::setw(13) << fmt(*r.holdout_map);
      out << (prev ? (*r.holdout_map >= *prev ? "+" : "") + fmt(*r.holdout_map - *prev) : std::string("-"));
      prev = r.holdout_map;
    } else {
      out << std::setw(13) << "n/a" << "-";
    }
    out << (r.resumed ? "  (resumed)" : "") << "\n";
  }
  return result;
}

namespace {

Ensemble ensemble_from_selector(const ExperimentConfig& config, const std::string& expression) {
  const auto members = select_members(scan_inventory(config.output_dir), parse_selector(expression));
  EnsembleSpec spec;
  spec.members = members;
  spec.tta = config.self_training.tta;
  spec.space = config.average_space;
  std::optional<fs::path> cache;
  if (!config.prediction_cache.empty()) cache = config.prediction_cache;
  return Ensemble(spec, config.self_training.geometry, cache);
}

std::map<std::string, Mask> predict_masks(const Ensemble& ensemble, const Dataset& data) {
  const auto probs = ensemble.predict(data);
  std::map<std::string, Mask> out;
  for (std::size_t i = 0; i < probs.size(); ++i) out.emplace(data.samples()[i].id, binarize(probs[i]));
  return out;
}

}  // namespace

void cmd_predict(const PredictOptions& options, const GlobalOptions& global, std::ostream& out) {
  const ExperimentConfig config = resolve_config(global);
  const fs::path input = options.input_dir.value_or(config.data.holdout_dir);
  if (input.empty()) throw ConfigError("no --input given and the config has no holdout_dir");
  const int size = config.self_training.geometry.source;
  const Ensemble ensemble = ensemble_from_selector(config, options.selector);
  const Dataset data = load_images(input, size, SplitTag::holdout);
  write_submission(options.out, predict_masks(ensemble, data), size, size);

  json members = json::array();
  for (const auto& m : ensemble.spec().members)
    members.push_back({{"checkpoint", m.checkpoint.string()}, {"arch", m.arch}, {"round", m.round},
                       {"fold", m.fold}, {"snapshot", m.snapshot}});
  auto manifest_path = options.out;
  manifest_path += ".manifest.json";
  write_json(manifest_path, {{"command", global.argv},
                             {"config_hash", config.hash()},
                             {"selector", options.selector},
                             {"input_dir", input.string()},
                             {"tta", ensemble.spec().tta},
                             {"members", members}});
  out << "predicted " << data.size() << " images with a " << ensemble.spec().members.size()
      << "-member ensemble -> " << options.out.string() << "\n";
}

EvaluationReport cmd_evaluate(const EvaluateOptions& options, const GlobalOptions& global, std::ostream& out) {
  if (options.predictions.has_value() == options.selector.has_value())
    throw ConfigError("evaluate needs exactly one of --predictions or --select");

  std::map<std::string, Mask> predictions;
  int size = options.image_size;
  std::map<std::string, Mask> truth;
  if (options.selector) {
    const ExperimentConfig config = resolve_config(global);
    size = config.self_training.geometry.source;
    const fs::path dir = options.data_dir.value_or(config.data.holdout_dir);
    if (dir.empty()) throw ConfigError("no --data given and the config has no holdout_dir");
    const Dataset data = load_images(dir, size, SplitTag::holdout, options.labels);
    predictions = predict_masks(ensemble_from_selector(config, *options.selector), data);
  } else {
    predictions = read_submission(*options.predictions, size, size);
  }
  for (const auto& [id, rle] : read_label_csv(options.labels)) truth.emplace(id, decode_rle(rle, size, size));

  std::vector<ScoredPair> pairs;
  for (const auto& [id, mask] : truth) {
    auto it = predictions.find(id);
    if (it != predictions.end()) pairs.push_back({id, &mask, &it->second});
  }
  if (pairs.empty()) throw DomainError("predictions and labels share no ids; nothing to evaluate");
  const auto report = mean_ap(pairs);
  if (options.report) write_report_csv(*options.report, report);
  out << "evaluated " << pairs.size() << " images (" << truth.size() - pairs.size() << " labels without prediction, "
      << predictions.size() - pairs.size() << " predictions without label)\n";
  out << "mAP " << fmt(report.map_score) << "\n";
  return report;
}

void cmd_mosaic(const MosaicOptions& options, const GlobalOptions& global, std::ostream& out) {
  const auto layout = parse_mosaic_layout(read_text_file(options.layout), options.image_size);
  const Dataset data = load_dataset(options.data_dir, LoadOptions{options.image_size, SplitTag::labeled, options.labels});
  const auto image = render_mosaic(layout, data);
  write_png_rgb(options.out, image);
  auto manifest_path = options.out;
  manifest_path += ".manifest.json";
  write_json(manifest_path, {{"command", global.argv}, {"layout", options.layout.string()},
                             {"rows", layout.rows()}, {"cols", layout.cols()}});
  out << "wrote " << image.height() << "x" << image.width() << " mosaic to " << options.out.string() << "\n";
}

int exit_code_for(const std::exception& error) noexcept {
  if (const auto* e = dynamic_cast<const Error*>(&error)) {
    switch (e->kind()) {
      case ErrorKind::validation: return 1;
      case ErrorKind::io: return 2;
      case ErrorKind::numerical: return 3;
    }
  }
  if (dynamic_cast<const fs::filesystem_error*>(&error)) return 2;
  return 1;
}

}  // namespace saltseg
