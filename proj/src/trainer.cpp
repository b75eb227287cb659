#include "saltseg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <unordered_set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/hashing.hpp"
#include "saltseg/metrics.hpp"
#include "saltseg/rng.hpp"

using nlohmann::json;

namespace saltseg {

// ---------------------------------------------------------------------------
// Configuration and schedule

void TrainingConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cycle_len <= 0) throw ConfigError("cycle_len must be positive");
  if (epochs % cycle_len != 0)
    throw ConfigError("epochs (" + std::to_string(epochs) + ") must be divisible by cycle_len (" +
                      std::to_string(cycle_len) + ")");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw ConfigError("warmup_epochs must lie in [0, epochs]");
  if (!(lr_max > 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) throw ConfigError("need 0 <= lr_min <= lr_max, lr_max > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (rounds < 1) throw ConfigError("rounds (K) must be at least 1");
  if (std::isnan(thresh)) throw ConfigError("thresh must not be NaN");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("optimizer must be 'sgd' or 'adam'");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

namespace {

json thresh_to_json(double t) {
  if (std::isinf(t)) return t < 0 ? "-inf" : "inf";
  return t;
}

double thresh_from_json(const json& j) {
  if (j.is_null()) return -std::numeric_limits<double>::infinity();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "-inf" || s == "-infinity") return -std::numeric_limits<double>::infinity();
    throw ConfigError("thresh must be a number or \"-inf\", got \"" + s + "\"");
  }
  return j.get<double>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

}  // namespace

json TrainingConfig::to_json() const {
  return json{{"epochs", epochs},
              {"cycle_len", cycle_len},
              {"lr_max", lr_max},
              {"lr_min", lr_min},
              {"warmup_epochs", warmup_epochs},
              {"batch_size", batch_size},
              {"seed", seed},
              {"rounds", rounds},
              {"thresh", thresh_to_json(thresh)},
              {"optimizer", optimizer},
              {"momentum", momentum},
              {"weight_decay", weight_decay},
              {"augment",
               {{"hflip", augment.hflip},
                {"hflip_probability", augment.hflip_probability},
                {"shift_scale", augment.shift_scale},
                {"max_shift", augment.max_shift},
                {"max_scale", augment.max_scale},
                {"intensity", augment.intensity},
                {"max_brightness", augment.max_brightness},
                {"max_contrast", augment.max_contrast}}}};
}

TrainingConfig TrainingConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"epochs", "cycle_len", "lr_max", "lr_min", "warmup_epochs", "batch_size", "seed", "rounds",
                  "thresh", "optimizer", "momentum", "weight_decay", "augment"},
                 "training config");
  TrainingConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.cycle_len = j.value("cycle_len", c.cycle_len);
    c.lr_max = j.value("lr_max", c.lr_max);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.rounds = j.value("rounds", c.rounds);
    if (j.contains("thresh")) c.thresh = thresh_from_json(j.at("thresh"));
    c.optimizer = j.value("optimizer", c.optimizer);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      reject_unknown(a,
                     {"hflip", "hflip_probability", "shift_scale", "max_shift", "max_scale", "intensity",
                      "max_brightness", "max_contrast"},
                     "augment config");
      c.augment.hflip = a.value("hflip", c.augment.hflip);
      c.augment.hflip_probability = a.value("hflip_probability", c.augment.hflip_probability);
      c.augment.shift_scale = a.value("shift_scale", c.augment.shift_scale);
      c.augment.max_shift = a.value("max_shift", c.augment.max_shift);
      c.augment.max_scale = a.value("max_scale", c.augment.max_scale);
      c.augment.intensity = a.value("intensity", c.augment.intensity);
      c.augment.max_brightness = a.value("max_brightness", c.augment.max_brightness);
      c.augment.max_contrast = a.value("max_contrast", c.augment.max_contrast);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_at(int epoch, const TrainingConfig& config) {
  if (epoch < 0 || epoch >= config.epochs)
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  const double phase = static_cast<double>(epoch % config.cycle_len) / config.cycle_len;
  return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

LossKind loss_for_epoch(int epoch, const TrainingConfig& config) {
  return epoch < config.warmup_epochs ? LossKind::bce : LossKind::lovasz;
}

std::vector<int> snapshot_epochs(const TrainingConfig& config) {
  std::vector<int> out;
  for (int e = 0; e < config.epochs; ++e)
    if (e % config.cycle_len == config.cycle_len - 1) out.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Tensors

torch::Tensor images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("no images to batch");
  const int h = images.front().height(), w = images.front().width();
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const auto& im : images) {
    if (im.height() != h || im.width() != w) throw ShapeError("images in a batch differ in size");
    std::copy(im.values().begin(), im.values().end(), dst);
    dst += im.size();
  }
  return out;
}

torch::Tensor masks_to_tensor(const std::vector<Mask>& masks) {
  if (masks.empty()) throw ShapeError("no masks to batch");
  const int h = masks.front().height(), w = masks.front().width();
  auto out = torch::empty({static_cast<int64_t>(masks.size()), 1, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const auto& m : masks) {
    if (m.height() != h || m.width() != w) throw ShapeError("masks in a batch differ in size");
    for (auto v : m.values()) *dst++ = static_cast<float>(v);
  }
  return out;
}

ModelParameters fresh_parameters(const SegmentationModelSpec& spec, std::uint64_t seed) {
  auto net = build_model(spec, seed);
  auto params = capture_parameters(*net);
  params.extra["init_source"] = spec.pretrained ? "pretrained:" + spec.pretrained_path : "random";
  params.extra["init_seed"] = seed;
  return params;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::unique_ptr<torch::optim::Optimizer> make_optimizer(SaltNetImpl& net, const TrainingConfig& config) {
  if (config.optimizer == "adam")
    return std::make_unique<torch::optim::Adam>(
        net.parameters(), torch::optim::AdamOptions(config.lr_max).weight_decay(config.weight_decay));
  return std::make_unique<torch::optim::SGD>(
      net.parameters(),
      torch::optim::SGDOptions(config.lr_max).momentum(config.momentum).weight_decay(config.weight_decay));
}

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) group.options().set_lr(lr);
}

/// Splits [0,n) into batches; a trailing single sample joins the previous
/// batch because batch normalization needs two samples in training mode.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

struct ValidationSet {
  std::vector<torch::Tensor> inputs;   // preprocessed batches
  std::vector<torch::Tensor> targets;  // preprocessed mask batches
  std::vector<std::string> ids;
  std::vector<Mask> masks;             // source-resolution truth
};

ValidationSet prepare_validation(const Dataset& validation, const Geometry& geometry, int batch) {
  ValidationSet v;
  const auto& samples = validation.samples();
  for (const auto& [begin, end] : batch_ranges(samples.size(), static_cast<std::size_t>(batch))) {
    std::vector<Image> images;
    std::vector<Mask> masks;
    for (std::size_t i = begin; i < end; ++i) {
      images.push_back(preprocess(samples[i].image, geometry));
      masks.push_back(preprocess_mask(*samples[i].mask, geometry));
    }
    v.inputs.push_back(images_to_tensor(images));
    v.targets.push_back(masks_to_tensor(masks));
  }
  for (const auto& s : samples) {
    v.ids.push_back(s.id);
    v.masks.push_back(*s.mask);
  }
  return v;
}

Mask threshold_half(const Grid<float>& probs) {
  Mask out(probs.height(), probs.width());
  auto src = probs.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.5f ? 1 : 0;
  return out;
}

void validate_split(const Dataset& train, const Dataset& validation) {
  if (train.size() < 2) throw ConfigError("training split needs at least 2 samples, got " + std::to_string(train.size()));
  if (validation.empty()) throw ConfigError("validation split is empty");
  for (const auto& s : train.samples())
    if (!s.mask) throw ConfigError("training sample '" + s.id + "' has no mask");
  for (const auto& s : validation.samples()) {
    if (!s.mask) throw ConfigError("validation sample '" + s.id + "' has no mask");
    if (train.contains(s.id)) throw ConfigError("validation id '" + s.id + "' also appears in the training split");
  }
}

}  // namespace

RunResult train_run(const Dataset& train, const Dataset& validation, const TrainingConfig& config,
                    const RunContext& context, const ModelParameters& initial) {
  config.validate();
  context.geometry.validate();
  validate_split(train, validation);

  SaltNet net = instantiate(initial);
  if (net->spec.input_size != context.geometry.padded)
    throw ConfigError("model input_size " + std::to_string(net->spec.input_size) + " != geometry padded size " +
                      std::to_string(context.geometry.padded));

  RunResult result;
  if (config.epochs == 0) {
    result.final_params = initial;
    return result;
  }

  auto optimizer = make_optimizer(*net, config);
  const auto validation_set = prepare_validation(validation, context.geometry, config.batch_size);
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(context.round_tag),
                   static_cast<std::uint64_t>(context.fold_tag), fnv1a64(context.phase)));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    const LossKind kind = loss_for_epoch(epoch, config);
    set_learning_rate(*optimizer, lr);

    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    net->train();
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& [begin, end] : batch_ranges(order.size(), static_cast<std::size_t>(config.batch_size))) {
      std::vector<Image> images;
      std::vector<Mask> masks;
      for (std::size_t k = begin; k < end; ++k) {
        auto sample = augment(train.samples()[order[k]], config.augment, rng);
        images.push_back(preprocess(sample.image, context.geometry));
        masks.push_back(preprocess_mask(*sample.mask, context.geometry));
      }
      const auto inputs = images_to_tensor(images);
      const auto targets = masks_to_tensor(masks);
      optimizer->zero_grad();
      auto loss = compute_loss(kind, net->forward(inputs), targets);
      const double value = loss.item<double>();
      if (!std::isfinite(value))
        throw NumericalError("non-finite " + std::string(to_string(kind)) + " loss at epoch " + std::to_string(epoch) +
                             " (round " + std::to_string(context.round_tag) + ", fold " +
                             std::to_string(context.fold_tag) + ", phase " + context.phase + ", lr " +
                             std::to_string(lr) + ")");
      loss.backward();
      optimizer->step();
      loss_sum += value * static_cast<double>(end - begin);
      seen += end - begin;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.phase = kind;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(seen);

    net->eval();
    {
      torch::NoGradGuard no_grad;
      double val_sum = 0.0;
      std::vector<Mask> predictions;
      predictions.reserve(validation_set.masks.size());
      for (std::size_t b = 0; b < validation_set.inputs.size(); ++b) {
        const auto logits = net->forward(validation_set.inputs[b]);
        val_sum += compute_loss(kind, logits, validation_set.targets[b]).item<double>() *
                   static_cast<double>(logits.size(0));
        const auto probs = torch::sigmoid(logits).contiguous();
        const int s = context.geometry.padded;
        for (int64_t i = 0; i < probs.size(0); ++i) {
          const float* p = probs[i].data_ptr<float>();
          Grid<float> full(s, s, std::vector<float>(p, p + static_cast<std::size_t>(s) * s));
          predictions.push_back(threshold_half(postprocess(full, context.geometry)));
        }
      }
      entry.val_loss = val_sum / static_cast<double>(validation_set.masks.size());
      std::vector<ScoredPair> pairs;
      for (std::size_t i = 0; i < predictions.size(); ++i)
        pairs.push_back({validation_set.ids[i], &validation_set.masks[i], &predictions[i]});
      entry.val_map = mean_ap(pairs).map_score;
    }
    if (!std::isfinite(entry.val_loss))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.log.push_back(entry);
    if (context.on_epoch) context.on_epoch(entry);

    if (epoch % config.cycle_len == config.cycle_len - 1) {
      Snapshot snap;
      snap.epoch = epoch;
      snap.cycle = epoch / config.cycle_len;
      snap.params = capture_parameters(*net);
      snap.params.round_tag = context.round_tag;
      snap.params.fold_tag = context.fold_tag;
      snap.params.snapshot_tag = snap.cycle;
      snap.params.epoch = epoch;
      snap.params.extra = initial.extra;
      snap.params.extra["phase"] = context.phase;
      result.snapshots.push_back(std::move(snap));
    }
  }
  result.final_params = result.snapshots.empty() ? capture_parameters(*net) : result.snapshots.back().params;
  return result;
}

RunResult train_run(const Dataset& dataset, const FoldAssignment& folds, int fold, const TrainingConfig& config,
                    const RunContext& context, const ModelParameters& initial) {
  if (fold < 0 || fold >= folds.n_folds) throw ConfigError("fold " + std::to_string(fold) + " out of range");
  std::vector<std::string> train_ids, val_ids;
  for (const auto& s : dataset.samples()) {
    auto it = folds.assignment.find(s.id);
    if (it == folds.assignment.end()) throw ConfigError("sample '" + s.id + "' has no fold assignment");
    (it->second == fold ? val_ids : train_ids).push_back(s.id);
  }
  if (train_ids.empty()) throw ConfigError("training fold is empty");
  return train_run(dataset.subset(train_ids), dataset.subset(val_ids), config, context, initial);
}

RunResult finetune_run(const SegmentationModelSpec& spec, const Dataset& train, const Dataset& validation,
                       const TrainingConfig& config, const RunContext& context, const ModelParameters& prior) {
  if (prior.spec_hash != spec.hash())
    throw CompatibilityError("fine-tune parameters belong to spec " + prior.spec_hash + ", expected " + spec.hash());
  return train_run(train, validation, config, context, prior);
}

// ---------------------------------------------------------------------------

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  CsvTable table{{"epoch", "phase", "lr", "train_loss", "val_loss", "val_map"}, {}};
  char buf[4][40];
  for (const auto& e : log) {
    std::snprintf(buf[0], sizeof(buf[0]), "%.17g", e.lr);
    std::snprintf(buf[1], sizeof(buf[1]), "%.17g", e.train_loss);
    std::snprintf(buf[2], sizeof(buf[2]), "%.17g", e.val_loss);
    std::snprintf(buf[3], sizeof(buf[3]), "%.17g", e.val_map);
    table.rows.push_back({std::to_string(e.epoch), to_string(e.phase), buf[0], buf[1], buf[2], buf[3]});
  }
  write_csv(path, table);
}

std::vector<EpochLog> read_training_log(const std::filesystem::path& path) {
  auto table = read_csv(path, {"epoch", "phase", "lr", "train_loss", "val_loss", "val_map"});
  std::vector<EpochLog> out;
  for (const auto& row : table.rows) {
    EpochLog e;
    try {
      e.epoch = std::stoi(row[0]);
      e.phase = row[1] == "bce" ? LossKind::bce : LossKind::lovasz;
      e.lr = std::stod(row[2]);
      e.train_loss = std::stod(row[3]);
      e.val_loss = std::stod(row[4]);
      e.val_map = std::stod(row[5]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed log row");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace saltseg
