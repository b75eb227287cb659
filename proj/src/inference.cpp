#include "saltseg/inference.hpp"

#include <fstream>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/rle.hpp"
#include "saltseg/trainer.hpp"

namespace fs = std::filesystem;

namespace saltseg {

namespace {

constexpr std::size_t kBatch = 16;

void require_batch_shape(const torch::Tensor& batch) {
  if (batch.dim() != 4 || batch.size(1) != 1 || batch.size(2) != batch.size(3))
    throw ShapeError("expected an (N,1,S,S) batch, got " + c10::str(batch.sizes()));
}

int member_input_size(const MemberRef& member) {
  const auto spec = member.params ? member.params->spec : read_checkpoint_manifest(member.checkpoint).at("spec");
  return spec.at("input_size").get<int>();
}

ModelParameters load_member(const MemberRef& member) {
  return member.params ? *member.params : load_checkpoint(member.checkpoint);
}

bool read_cached(const fs::path& path, torch::Tensor& dst) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  in.read(static_cast<char*>(dst.data_ptr()), static_cast<std::streamsize>(dst.nbytes()));
  return static_cast<bool>(in) && in.peek() == std::char_traits<char>::eof();
}

void write_cached(const fs::path& path, const torch::Tensor& src) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write prediction cache entry " + tmp.string());
    out.write(static_cast<const char*>(src.data_ptr()), static_cast<std::streamsize>(src.nbytes()));
    if (!out) throw IoError("write failed for prediction cache entry " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string MemberRef::describe() const {
  std::string where = checkpoint.empty() ? std::string("<in-memory>") : checkpoint.string();
  return where + " (arch " + arch + ", round " + std::to_string(round) + ", fold " + std::to_string(fold) +
         ", snapshot " + std::to_string(snapshot) + ")";
}

torch::Tensor tta_predict(const LogitFn& logits, const torch::Tensor& batch) {
  require_batch_shape(batch);
  const auto plain = torch::sigmoid(logits(batch));
  const auto flipped = torch::sigmoid(logits(batch.flip({3}))).flip({3});
  return 0.5 * (plain + flipped);
}

ProbabilityMap tta_predict(SaltNetImpl& model, const Image& preprocessed) {
  torch::NoGradGuard no_grad;
  model.eval();
  const auto probs =
      tta_predict([&](const torch::Tensor& x) { return model.forward(x); }, images_to_tensor({preprocessed}))
          .contiguous();
  const float* p = probs.data_ptr<float>();
  return ProbabilityMap(preprocessed.height(), preprocessed.width(),
                        std::vector<float>(p, p + preprocessed.size()));
}

// ---------------------------------------------------------------------------

Ensemble::Ensemble(EnsembleSpec spec, Geometry geometry, std::optional<fs::path> cache_dir)
    : spec_(std::move(spec)), geometry_(geometry), cache_dir_(std::move(cache_dir)) {
  geometry_.validate();
  if (spec_.members.empty()) throw ValidationError("ensemble has no members");
  for (const auto& m : spec_.members) {
    if (!m.params && !fs::exists(m.checkpoint)) throw IoError("missing ensemble checkpoint " + m.checkpoint.string());
    const int size = member_input_size(m);
    if (size != geometry_.padded)
      throw CompatibilityError("member " + m.describe() + " expects input " + std::to_string(size) +
                               " but the ensemble geometry pads to " + std::to_string(geometry_.padded));
  }
}

torch::Tensor Ensemble::member_outputs(const MemberRef& member, const std::vector<torch::Tensor>& batches,
                                       const std::vector<std::string>& ids) const {
  const ModelParameters params = load_member(member);
  const int s = geometry_.padded;
  auto out = torch::empty({static_cast<int64_t>(ids.size()), 1, s, s}, torch::kFloat32);

  std::optional<fs::path> dir;
  const bool cacheable =
      cache_dir_ && std::none_of(ids.begin(), ids.end(), [](const std::string& id) { return id.empty(); });
  if (cacheable) {
    dir = *cache_dir_ / (params.content_hash() + (spec_.tta ? "-tta" : "-plain") +
                         (spec_.space == AverageSpace::probability ? "-prob" : "-logit"));
    bool all = true;
    for (std::size_t i = 0; i < ids.size() && all; ++i) {
      auto slot = out[static_cast<int64_t>(i)];
      all = read_cached(*dir / (ids[i] + ".f32"), slot);
    }
    if (all) {
      cache_hits_ += ids.size();
      return out;
    }
  }

  SaltNet net = instantiate(params);
  net->eval();
  torch::NoGradGuard no_grad;
  const LogitFn fn = [&](const torch::Tensor& x) { return net->forward(x); };
  int64_t offset = 0;
  for (const auto& batch : batches) {
    torch::Tensor result;
    if (spec_.space == AverageSpace::probability) {
      result = spec_.tta ? tta_predict(fn, batch) : torch::sigmoid(fn(batch));
    } else {
      result = spec_.tta ? 0.5 * (fn(batch) + fn(batch.flip({3})).flip({3})) : fn(batch);
    }
    out.slice(0, offset, offset + batch.size(0)).copy_(result);
    offset += batch.size(0);
  }
  if (dir)
    for (std::size_t i = 0; i < ids.size(); ++i)
      write_cached(*dir / (ids[i] + ".f32"), out[static_cast<int64_t>(i)].contiguous());
  return out;
}

std::vector<ProbabilityMap> Ensemble::predict(const std::vector<Image>& images,
                                              const std::vector<std::string>& ids) const {
  if (images.empty()) return {};
  if (ids.size() != images.size()) throw ValidationError("predict: one id per image required");
  std::vector<torch::Tensor> batches;
  for (std::size_t begin = 0; begin < images.size(); begin += kBatch) {
    std::vector<Image> chunk;
    for (std::size_t i = begin; i < std::min(images.size(), begin + kBatch); ++i)
      chunk.push_back(preprocess(images[i], geometry_));
    batches.push_back(images_to_tensor(chunk));
  }

  const int s = geometry_.padded;
  auto sum = torch::zeros({static_cast<int64_t>(images.size()), 1, s, s}, torch::kFloat64);
  for (const auto& member : spec_.members) sum += member_outputs(member, batches, ids).to(torch::kFloat64);
  auto mean = sum / static_cast<double>(spec_.members.size());
  if (spec_.space == AverageSpace::logit) mean = torch::sigmoid(mean);
  mean = mean.to(torch::kFloat32).contiguous();

  std::vector<ProbabilityMap> out;
  out.reserve(images.size());
  const float* p = mean.data_ptr<float>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    Grid<float> full(s, s, std::vector<float>(p + i * s * s, p + (i + 1) * s * s));
    out.push_back(postprocess(full, geometry_));
  }
  return out;
}

std::vector<ProbabilityMap> Ensemble::predict(const Dataset& dataset) const {
  std::vector<Image> images;
  for (const auto& s : dataset.samples()) images.push_back(s.image);
  return predict(images, dataset.ids());
}

ProbabilityMap Ensemble::predict(const Image& image, const std::string& id) const {
  return predict(std::vector<Image>{image}, std::vector<std::string>{id}).front();
}

// ---------------------------------------------------------------------------

Mask binarize(const ProbabilityMap& probabilities, double threshold) {
  Mask out(probabilities.height(), probabilities.width());
  auto src = probabilities.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1 : 0;
  return out;
}

EvaluationReport evaluate(const Ensemble& ensemble, const Dataset& holdout) {
  for (const auto& s : holdout.samples())
    if (!s.mask) throw ValidationError("holdout sample '" + s.id + "' has no mask");
  const auto probs = ensemble.predict(holdout);
  std::vector<Mask> predictions;
  predictions.reserve(probs.size());
  for (const auto& p : probs) predictions.push_back(binarize(p));
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& s = holdout.samples()[i];
    pairs.push_back({s.id, &*s.mask, &predictions[i]});
  }
  return mean_ap(pairs);
}

void write_submission(const fs::path& path, const std::map<std::string, Mask>& predictions, int height, int width) {
  CsvTable table{{"id", "rle_mask"}, {}};
  for (const auto& [id, mask] : predictions) {
    if (mask.height() != height || mask.width() != width)
      throw ValidationError("prediction '" + id + "' is " + std::to_string(mask.height()) + "x" +
                            std::to_string(mask.width()) + ", expected " + std::to_string(height) + "x" +
                            std::to_string(width));
    table.rows.push_back({id, encode_rle(mask)});
  }
  write_csv(path, table);
}

std::map<std::string, Mask> read_submission(const fs::path& path, int height, int width) {
  const auto table = read_csv(path, {"id", "rle_mask"});
  std::map<std::string, Mask> out;
  for (const auto& row : table.rows) {
    if (!out.emplace(row[0], decode_rle(row[1], height, width)).second)
      throw FormatError(path.string() + ": duplicate id '" + row[0] + "'");
  }
  return out;
}

void configure_runtime(bool deterministic, const std::string& device, int threads) {
  if (device != "cpu") throw ConfigError("unsupported device '" + device + "' (this build runs on cpu only)");
  if (threads < 1) throw ConfigError("thread count must be positive");
  torch::set_num_threads(threads);
  at::globalContext().setDeterministicAlgorithms(deterministic, /*warn_only=*/false);
}

}  // namespace saltseg
