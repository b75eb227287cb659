#include "saltseg/config.hpp"

#include <set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/hashing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace saltseg {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

void ExperimentConfig::validate() const {
  self_training.validate();
  if (data.labeled_dir.empty()) throw ConfigError("data.labeled_dir is required");
  if (data.labels.empty()) throw ConfigError("data.labels is required");
  if (data.holdout_dir.empty() != data.holdout_labels.empty())
    throw ConfigError("data.holdout_dir and data.holdout_labels go together");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (device != "cpu") throw ConfigError("unsupported device '" + device + "'");
}

json ExperimentConfig::to_json() const {
  return json{{"data",
               {{"labeled_dir", data.labeled_dir.string()},
                {"labels", data.labels.string()},
                {"pool_dir", data.pool_dir.string()},
                {"holdout_dir", data.holdout_dir.string()},
                {"holdout_labels", data.holdout_labels.string()},
                {"folds", data.folds.string()}}},
              {"output_dir", output_dir.string()},
              {"deterministic", deterministic},
              {"device", device},
              {"threads", threads},
              {"self_training", self_training.to_json()},
              {"average_space", average_space == AverageSpace::probability ? "probability" : "logit"},
              {"prediction_cache", prediction_cache.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"data", "output_dir", "deterministic", "device", "threads", "self_training", "average_space",
                  "prediction_cache"},
                 "experiment config");
  ExperimentConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"labeled_dir", "labels", "pool_dir", "holdout_dir", "holdout_labels", "folds"}, "data");
      c.data.labeled_dir = resolve(d, "labeled_dir", base_dir);
      c.data.labels = resolve(d, "labels", base_dir);
      c.data.pool_dir = resolve(d, "pool_dir", base_dir);
      c.data.holdout_dir = resolve(d, "holdout_dir", base_dir);
      c.data.holdout_labels = resolve(d, "holdout_labels", base_dir);
      c.data.folds = resolve(d, "folds", base_dir);
    }
    if (j.contains("output_dir")) c.output_dir = resolve(j, "output_dir", base_dir);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.device = j.value("device", c.device);
    c.threads = j.value("threads", c.threads);
    if (j.contains("self_training")) c.self_training = SelfTrainingConfig::from_json(j.at("self_training"));
    const auto space = j.value("average_space", std::string("probability"));
    if (space == "probability") c.average_space = AverageSpace::probability;
    else if (space == "logit") c.average_space = AverageSpace::logit;
    else throw ConfigError("average_space must be 'probability' or 'logit'");
    c.prediction_cache = resolve(j, "prediction_cache", base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const { return to_hex(fnv1a64(to_json().dump())); }

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

ExperimentConfig desk_scale_config(const fs::path& data_root, const fs::path& output_dir, std::uint64_t seed) {
  ExperimentConfig c;
  c.data.labeled_dir = data_root / "labeled";
  c.data.labels = data_root / "labeled" / "labels.csv";
  c.data.pool_dir = data_root / "pool";
  c.data.holdout_dir = data_root / "holdout";
  c.data.holdout_labels = data_root / "holdout" / "labels.csv";
  c.output_dir = output_dir;

  auto& st = c.self_training;
  st.geometry = Geometry{64, 64, 64};
  st.architectures = {{"tiny", tiny_test_spec(64)}};
  st.n_folds = 2;
  st.mode = RoundMode::sequential;
  auto& t = st.training;
  t.epochs = 8;
  t.cycle_len = 4;
  t.warmup_epochs = 4;
  t.rounds = 2;
  t.batch_size = 4;
  t.optimizer = "adam";
  t.lr_max = 3e-3;
  t.lr_min = 1e-4;
  t.weight_decay = 0.0;
  t.seed = seed;
  c.validate();
  return c;
}

}  // namespace saltseg
