#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "saltseg/model.hpp"

namespace saltseg {

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

/// Learned state of one network (parameters and normalization buffers, in
/// registration order) plus round, fold and snapshot tags.
struct ModelParameters {
  std::vector<NamedTensor> tensors;
  nlohmann::json spec;      // SegmentationModelSpec::to_json()
  std::string spec_hash;
  int round_tag = 0;
  int fold_tag = 0;
  int snapshot_tag = 0;
  int epoch = -1;
  nlohmann::json extra = nlohmann::json::object();

  /// Content hash over names, shapes, dtypes and raw bytes.
  std::string content_hash() const;
};

/// Deep copy of the module state, detached from autograd.
ModelParameters capture_parameters(SaltNetImpl& net);
/// Throws CompatibilityError if the spec hash or any name/shape differs.
void apply_parameters(SaltNetImpl& net, const ModelParameters& params);

/// Binary container: magic "SALTCKPT", u32 version, u64 manifest length, the
/// JSON manifest (tags, spec, tensor index), then raw little-endian tensor
/// bytes. Round-trips bit-exactly. Throws IoError.
void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params);
ModelParameters load_checkpoint(const std::filesystem::path& path);
/// Manifest only, without reading tensor data.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Copies every `encoder.*` tensor from a checkpoint file into the network.
/// Throws IoError for a missing file, CompatibilityError on shape mismatch.
void load_pretrained_encoder(SaltNetImpl& net, const std::filesystem::path& path);

/// Builds a network for the checkpoint's embedded spec and loads it.
SaltNet instantiate(const ModelParameters& params);

}  // namespace saltseg
