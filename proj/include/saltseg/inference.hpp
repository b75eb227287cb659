#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saltseg/checkpoint.hpp"
#include "saltseg/dataset.hpp"
#include "saltseg/metrics.hpp"
#include "saltseg/transforms.hpp"

namespace saltseg {

/// One ensemble member. Either `checkpoint` names a file or `params` holds the
/// weights in memory (used by tests and by freshly trained rounds).
struct MemberRef {
  std::filesystem::path checkpoint;
  std::shared_ptr<const ModelParameters> params;
  std::string arch;
  int fold = 0;
  int snapshot = 0;
  int round = 0;

  std::string describe() const;
};

enum class AverageSpace { probability, logit };

struct EnsembleSpec {
  std::vector<MemberRef> members;
  bool tta = true;
  AverageSpace space = AverageSpace::probability;
};

/// Maps a (N,1,S,S) input batch to logits of the same shape.
using LogitFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Flip TTA in probability space: (sigmoid(f(x)) + unflip(sigmoid(f(flip(x))))) / 2.
/// Throws ShapeError unless the batch is (N,1,S,S).
torch::Tensor tta_predict(const LogitFn& logits, const torch::Tensor& batch);

/// Single preprocessed image through a model in eval mode.
ProbabilityMap tta_predict(SaltNetImpl& model, const Image& preprocessed);

/// Averages member predictions for whole image sets. Members are visited one at
/// a time in the given order, so memory holds a single model at once.
class Ensemble {
 public:
  /// Throws ValidationError for an empty member list and CompatibilityError
  /// naming the offending checkpoint when input sizes disagree with `geometry`.
  Ensemble(EnsembleSpec spec, Geometry geometry, std::optional<std::filesystem::path> cache_dir = std::nullopt);

  const EnsembleSpec& spec() const noexcept { return spec_; }
  const Geometry& geometry() const noexcept { return geometry_; }

  /// Source-resolution probability maps, one per image. `ids` key the cache.
  std::vector<ProbabilityMap> predict(const std::vector<Image>& images, const std::vector<std::string>& ids) const;
  std::vector<ProbabilityMap> predict(const Dataset& dataset) const;
  ProbabilityMap predict(const Image& image, const std::string& id = "") const;

  /// Number of member predictions served from the cache so far.
  std::size_t cache_hits() const noexcept { return cache_hits_; }

 private:
  torch::Tensor member_outputs(const MemberRef& member, const std::vector<torch::Tensor>& batches,
                               const std::vector<std::string>& ids) const;

  EnsembleSpec spec_;
  Geometry geometry_;
  std::optional<std::filesystem::path> cache_dir_;
  mutable std::size_t cache_hits_ = 0;
};

/// 1 where p > threshold (strict), else 0.
Mask binarize(const ProbabilityMap& probabilities, double threshold = 0.5);

/// preprocess -> ensemble -> binarize -> mean_ap at source resolution.
/// Throws ValidationError when a holdout sample has no mask.
EvaluationReport evaluate(const Ensemble& ensemble, const Dataset& holdout);

/// CSV `id,rle_mask`, ids sorted. Throws ValidationError for masks of the wrong
/// size or non-binary masks.
void write_submission(const std::filesystem::path& path, const std::map<std::string, Mask>& predictions,
                      int height = 101, int width = 101);
std::map<std::string, Mask> read_submission(const std::filesystem::path& path, int height = 101, int width = 101);

/// Single-thread, deterministic-algorithm execution. Only "cpu" is accepted as
/// a device; anything else is a ConfigError.
void configure_runtime(bool deterministic, const std::string& device = "cpu", int threads = 1);

}  // namespace saltseg
