#include "saltseg/self_training.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/hashing.hpp"
#include "saltseg/rle.hpp"
#include "saltseg/rng.hpp"
#include "saltseg/selector.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace saltseg {

// ---------------------------------------------------------------------------
// Pseudo-labels

Dataset PseudoLabelSet::as_dataset(const Dataset& pool) const {
  std::vector<SeismicSample> samples;
  for (const auto& s : pool.samples()) {
    auto it = entries.find(s.id);
    if (it == entries.end()) continue;
    samples.push_back({s.id, s.image, it->second.mask, SplitTag::unlabeled});
  }
  return Dataset(std::move(samples), DatasetKind::pseudo);
}

PseudoLabelSet generate_pseudo_labels(const Ensemble& ensemble, const Dataset& pool, double thresh, int round,
                                      bool full_salt_as_empty) {
  if (std::isnan(thresh)) throw ConfigError("thresh must not be NaN");
  PseudoLabelSet out;
  out.round = round;
  if (pool.empty()) return out;
  const auto probs = ensemble.predict(pool);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double confidence = mask_confidence(probs[i]);
    if (confidence < thresh) continue;
    Mask mask = binarize(probs[i]);
    if (full_salt_as_empty && count_ones(mask) == mask.size()) mask = Mask(mask.height(), mask.width());
    out.entries.emplace(pool.samples()[i].id, PseudoLabel{std::move(mask), confidence});
  }
  return out;
}

void write_pseudo_labels(const fs::path& path, const PseudoLabelSet& labels) {
  CsvTable table{{"id", "rle_mask", "confidence"}, {}};
  char buf[40];
  for (const auto& [id, label] : labels.entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", label.confidence);
    table.rows.push_back({id, encode_rle(label.mask), buf});
  }
  write_csv(path, table);
}

PseudoLabelSet read_pseudo_labels(const fs::path& path, int round, int height, int width) {
  const auto table = read_csv(path, {"id", "rle_mask", "confidence"});
  PseudoLabelSet out;
  out.round = round;
  for (const auto& row : table.rows) {
    double confidence = 0.0;
    try {
      confidence = std::stod(row[2]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad confidence '" + row[2] + "' for '" + row[0] + "'");
    }
    if (!out.entries.emplace(row[0], PseudoLabel{decode_rle(row[1], height, width), confidence}).second)
      throw FormatError(path.string() + ": duplicate id '" + row[0] + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(RoundMode mode) { return mode == RoundMode::sequential ? "sequential" : "joint"; }

void SelfTrainingConfig::validate() const {
  training.validate();
  geometry.validate();
  if (architectures.empty()) throw ConfigError("at least one architecture is required");
  std::set<std::string> names;
  for (const auto& a : architectures) {
    if (a.name.empty()) throw ConfigError("architecture names must be non-empty");
    if (!names.insert(a.name).second) throw ConfigError("duplicate architecture name '" + a.name + "'");
    a.spec.validate();
    if (a.spec.input_size != geometry.padded)
      throw ConfigError("architecture '" + a.name + "' has input_size " + std::to_string(a.spec.input_size) +
                        " but geometry pads to " + std::to_string(geometry.padded));
  }
  if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
}

json SelfTrainingConfig::to_json() const {
  json archs = json::array();
  for (const auto& a : architectures) archs.push_back({{"name", a.name}, {"spec", a.spec.to_json()}});
  return json{{"training", training.to_json()},
              {"architectures", archs},
              {"n_folds", n_folds},
              {"mode", to_string(mode)},
              {"tta", tta},
              {"full_salt_as_empty", full_salt_as_empty},
              {"geometry", {{"source", geometry.source}, {"scaled", geometry.scaled}, {"padded", geometry.padded}}}};
}

SelfTrainingConfig SelfTrainingConfig::from_json(const json& j) {
  static const std::set<std::string> known{"training", "architectures", "n_folds", "mode",
                                           "tta",      "full_salt_as_empty", "geometry"};
  if (!j.is_object()) throw ConfigError("self-training config must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in self-training config");
  SelfTrainingConfig c;
  try {
    if (j.contains("training")) c.training = TrainingConfig::from_json(j.at("training"));
    if (j.contains("architectures")) {
      for (const auto& a : j.at("architectures")) {
        for (const auto& [key, value] : a.items())
          if (key != "name" && key != "spec") throw ConfigError("unknown key '" + key + "' in architecture entry");
        c.architectures.push_back({a.at("name").get<std::string>(), SegmentationModelSpec::from_json(a.at("spec"))});
      }
    }
    c.n_folds = j.value("n_folds", c.n_folds);
    const auto mode = j.value("mode", std::string("sequential"));
    if (mode == "sequential") c.mode = RoundMode::sequential;
    else if (mode == "joint") c.mode = RoundMode::joint;
    else throw ConfigError("mode must be 'sequential' or 'joint', got '" + mode + "'");
    c.tta = j.value("tta", c.tta);
    c.full_salt_as_empty = j.value("full_salt_as_empty", c.full_salt_as_empty);
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      for (const auto& [key, value] : g.items())
        if (key != "source" && key != "scaled" && key != "padded")
          throw ConfigError("unknown key '" + key + "' in geometry");
      c.geometry.source = g.value("source", c.geometry.source);
      c.geometry.scaled = g.value("scaled", c.geometry.scaled);
      c.geometry.padded = g.value("padded", c.geometry.padded);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad self-training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string SelfTrainingConfig::hash() const { return to_hex(fnv1a64(to_json().dump())); }

// ---------------------------------------------------------------------------
// Orchestration

namespace {

struct RoundPaths {
  fs::path dir;
  fs::path checkpoints() const { return dir / "checkpoints"; }
  fs::path logs() const { return dir / "logs"; }
  fs::path pseudo_labels() const { return dir / "pseudo_labels.csv"; }
  fs::path manifest() const { return dir / "manifest.json"; }
};

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw OrchestrationError(path.string() + " is not valid JSON: " + e.what());
  }
}

/// Loads a completed round or returns nullopt when it must be (re)built.
std::optional<RoundState> try_resume(const RoundPaths& paths, int round, const SelfTrainingConfig& config) {
  if (!fs::exists(paths.manifest())) return std::nullopt;
  const auto manifest = read_json(paths.manifest());
  if (manifest.value("status", "") != "complete") return std::nullopt;
  if (manifest.value("config_hash", "") != config.hash())
    throw OrchestrationError("round " + std::to_string(round) + " at " + paths.dir.string() +
                             " was produced by config " + manifest.value("config_hash", "?") + ", current is " +
                             config.hash());
  RoundState state;
  state.round = round;
  state.resumed = true;
  for (const auto& m : manifest.at("members")) {
    MemberRef ref;
    ref.checkpoint = paths.dir / m.at("file").get<std::string>();
    if (!fs::exists(ref.checkpoint))
      throw OrchestrationError("round " + std::to_string(round) + " manifest lists missing checkpoint " +
                               ref.checkpoint.string());
    ref.arch = m.at("arch").get<std::string>();
    ref.fold = m.at("fold").get<int>();
    ref.snapshot = m.at("snapshot").get<int>();
    ref.round = round;
    state.members.push_back(std::move(ref));
  }
  if (!fs::exists(paths.pseudo_labels()))
    throw OrchestrationError("round " + std::to_string(round) + " is marked complete but lacks " +
                             paths.pseudo_labels().string());
  state.pseudo_labels =
      read_pseudo_labels(paths.pseudo_labels(), round, config.geometry.source, config.geometry.source);
  if (manifest.contains("holdout_map") && !manifest.at("holdout_map").is_null())
    state.holdout_map = manifest.at("holdout_map").get<double>();
  return state;
}

std::string member_file(const std::string& arch, int fold, int snapshot) {
  return "checkpoints/" + arch + "-f" + std::to_string(fold) + "-s" + std::to_string(snapshot) + ".ckpt";
}

}  // namespace

SelfTrainingResult run_self_training(const SelfTrainingInputs& inputs, const SelfTrainingConfig& config,
                                     const fs::path& out_dir, bool resume,
                                     const std::function<void(const std::string&)>& progress) {
  config.validate();
  const auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const int K = config.training.rounds;
  if (inputs.folds.n_folds != config.n_folds)
    throw ConfigError("fold file has " + std::to_string(inputs.folds.n_folds) + " folds, config expects " +
                      std::to_string(config.n_folds));
  for (const auto& s : inputs.labeled.samples())
    if (!s.mask) throw ValidationError("labeled sample '" + s.id + "' has no mask");
  for (const auto& s : inputs.pool.samples())
    if (inputs.labeled.contains(s.id)) throw ValidationError("pool id '" + s.id + "' is also labeled");
  if (inputs.holdout)
    for (const auto& s : inputs.holdout->samples())
      if (inputs.labeled.contains(s.id) || inputs.pool.contains(s.id))
        throw ValidationError("holdout id '" + s.id + "' leaks into training data");

  const auto rounds_dir = out_dir / "rounds";
  if (!resume && fs::exists(rounds_dir) && !fs::is_empty(rounds_dir))
    throw OrchestrationError(rounds_dir.string() + " already holds rounds; pass resume to continue");

  SelfTrainingResult result;
  result.rounds.reserve(static_cast<std::size_t>(K));
  const PseudoLabelSet* previous = nullptr;
  for (int k = 1; k <= K; ++k) {
    RoundPaths paths{rounds_dir / std::to_string(k)};
    if (resume) {
      if (auto state = try_resume(paths, k, config)) {
        say("round " + std::to_string(k) + ": reusing completed artifacts");
        result.rounds.push_back(std::move(*state));
        previous = &result.rounds.back().pseudo_labels;
        continue;
      }
      if (k > 1 && !previous)
        throw OrchestrationError("cannot resume round " + std::to_string(k) + ": round " + std::to_string(k - 1) +
                                 " artifacts are missing");
      fs::remove_all(paths.dir);
    }
    fs::create_directories(paths.checkpoints());
    fs::create_directories(paths.logs());

    RoundState state;
    state.round = k;
    json lineage = json::array();
    json members = json::array();
    const Dataset pseudo = (k > 1 && previous) ? previous->as_dataset(inputs.pool) : Dataset(std::vector<SeismicSample>{}, DatasetKind::pseudo);

    for (std::size_t a = 0; a < config.architectures.size(); ++a) {
      const auto& arch = config.architectures[a];
      for (int fold = 0; fold < config.n_folds; ++fold) {
        const std::uint64_t init_seed = mix_seed(config.training.seed, static_cast<std::uint64_t>(k),
                                                 static_cast<std::uint64_t>(fold), a);
        const ModelParameters init = fresh_parameters(arch.spec, init_seed);
        const Dataset gt_train = inputs.labeled.subset(inputs.folds.train_ids(fold));
        const Dataset validation = inputs.labeled.subset(inputs.folds.fold_ids(fold));

        RunContext ctx;
        ctx.geometry = config.geometry;
        ctx.round_tag = k;
        ctx.fold_tag = fold;
        json phases = json::array();
        const auto run_phase = [&](const std::string& phase, const Dataset& train, const ModelParameters& start,
                                   bool finetune) {
          ctx.phase = phase;
          say("round " + std::to_string(k) + " " + arch.name + " fold " + std::to_string(fold) + ": " + phase +
              " on " + std::to_string(train.size()) + " samples");
          RunResult r = finetune ? finetune_run(arch.spec, train, validation, config.training, ctx, start)
                                 : train_run(train, validation, config.training, ctx, start);
          const auto log_name = "logs/" + arch.name + "-f" + std::to_string(fold) + "-" + phase + ".csv";
          write_training_log(paths.dir / log_name, r.log);
          phases.push_back({{"phase", phase}, {"samples", train.size()}, {"log", log_name}});
          return r;
        };

        RunResult final_run;
        if (k == 1) {
          final_run = run_phase("gt", gt_train, init, false);
        } else if (config.mode == RoundMode::joint) {
          final_run = run_phase("joint", merge(gt_train, pseudo), init, false);
        } else {
          ModelParameters start = init;
          if (pseudo.size() >= 2) {
            start = run_phase("pseudo", pseudo, init, false).final_params;
          } else {
            phases.push_back({{"phase", "pseudo"}, {"samples", pseudo.size()}, {"skipped", true}});
          }
          final_run = run_phase("finetune", gt_train, start, true);
        }

        for (auto& snap : final_run.snapshots) {
          snap.params.extra["arch"] = arch.name;
          snap.params.extra["round"] = k;
          const auto file = member_file(arch.name, fold, snap.cycle);
          save_checkpoint(paths.dir / file, snap.params);
          members.push_back({{"file", file},
                             {"arch", arch.name},
                             {"fold", fold},
                             {"snapshot", snap.cycle},
                             {"epoch", snap.epoch},
                             {"content_hash", snap.params.content_hash()}});
          MemberRef ref;
          ref.checkpoint = paths.dir / file;
          ref.arch = arch.name;
          ref.fold = fold;
          ref.snapshot = snap.cycle;
          ref.round = k;
          state.members.push_back(std::move(ref));
        }
        lineage.push_back({{"arch", arch.name},
                           {"fold", fold},
                           {"init_source", init.extra.at("init_source")},
                           {"init_seed", init_seed},
                           {"init_hash", init.content_hash()},
                           {"spec_hash", arch.spec.hash()},
                           {"phases", phases}});
      }
    }

    if (state.members.empty())
      throw OrchestrationError("round " + std::to_string(k) + " produced no snapshots (epochs = 0?)");
    EnsembleSpec spec;
    spec.members = state.members;
    spec.tta = config.tta;
    const Ensemble ensemble(spec, config.geometry);

    if (inputs.holdout && !inputs.holdout->empty()) {
      const auto report = evaluate(ensemble, *inputs.holdout);
      state.holdout_map = report.map_score;
      write_report_csv(paths.dir / "holdout_report.csv", report);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", report.map_score);
      say("round " + std::to_string(k) + ": holdout mAP " + buf);
    }

    say("round " + std::to_string(k) + ": pseudo-labelling " + std::to_string(inputs.pool.size()) + " pool images");
    state.pseudo_labels =
        generate_pseudo_labels(ensemble, inputs.pool, config.training.thresh, k, config.full_salt_as_empty);
    write_pseudo_labels(paths.pseudo_labels(), state.pseudo_labels);

    const json manifest{{"round", k},
                        {"status", "complete"},
                        {"config_hash", config.hash()},
                        {"config", config.to_json()},
                        {"mode", to_string(config.mode)},
                        {"pseudo_source_round", k > 1 ? json(k - 1) : json(nullptr)},
                        {"pseudo_labels_consumed", k > 1 ? pseudo.size() : 0},
                        {"pseudo_labels_produced", state.pseudo_labels.entries.size()},
                        {"holdout_map", state.holdout_map ? json(*state.holdout_map) : json(nullptr)},
                        {"members", members},
                        {"lineage", lineage}};
    write_text_file(paths.manifest(), manifest.dump(2) + "\n");
    result.rounds.push_back(std::move(state));
    previous = &result.rounds.back().pseudo_labels;
  }
  return result;
}

}  // namespace saltseg
