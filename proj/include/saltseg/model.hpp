#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace saltseg {

inline constexpr const char* kResidual34 = "residual-34-style";
inline constexpr const char* kResidualGrouped50 = "residual-grouped-50-style";
inline constexpr const char* kTinyTest = "tiny-test";

/// Architecture recipe. Parameter names and shapes are a pure function of
/// the architecture fields; `pretrained` only controls initialization.
struct SegmentationModelSpec {
  std::string backbone_id = kResidual34;
  bool pretrained = false;
  std::string pretrained_path;
  int scse_reduction = 16;
  std::vector<int> decoder_channels{256, 128, 64, 48, 32};
  int input_size = 256;
  int fpa_channels = 256;
  int fpa_pyramid_channels = 1;
  int head_channels = 64;

  /// Throws ConfigError for unknown backbones or inconsistent widths.
  void validate() const;
  nlohmann::json to_json() const;
  /// Rejects unknown keys with ConfigError.
  static SegmentationModelSpec from_json(const nlohmann::json& j);
  /// Hash of the architecture fields only.
  std::string hash() const;
};

SegmentationModelSpec residual34_spec();
SegmentationModelSpec residual_grouped50_spec();
/// 4-stage encoder under 100k parameters for CPU training.
SegmentationModelSpec tiny_test_spec(int input_size = 256);

struct EncoderStage {
  int channels;
  int stride;
};
/// Encoder stage table (channels and output stride) for a backbone id.
std::vector<EncoderStage> encoder_stages(const std::string& backbone_id);

// ---------------------------------------------------------------------------

struct ConvBnReluImpl : torch::nn::Module {
  ConvBnReluImpl(int in, int out, int kernel, int stride = 1, int groups = 1, bool relu = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  bool relu;
};
TORCH_MODULE(ConvBnRelu);

/// Concurrent spatial and channel squeeze-and-excitation: x*cSE + x*sSE,
/// both gates in (0,1). Channels must be divisible by the reduction.
struct ScSEImpl : torch::nn::Module {
  ScSEImpl(int channels, int reduction);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor channel_gate(const torch::Tensor& x);
  torch::Tensor spatial_gate(const torch::Tensor& x);

  torch::nn::Conv2d squeeze{nullptr}, excite{nullptr}, spatial{nullptr};
};
TORCH_MODULE(ScSE);

/// Feature pyramid attention on the bottleneck: a three-level 7x7/5x5/3x3
/// pyramid builds an attention map that multiplies a 1x1-projected copy of
/// the input; a global-pooling branch is added on top. Needs >= 8x8 input.
struct FpaImpl : torch::nn::Module {
  FpaImpl(int in_channels, int out_channels, int pyramid_channels = 1);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor attention(const torch::Tensor& x);

  ConvBnRelu master{nullptr};
  torch::nn::Conv2d global{nullptr};
  ConvBnRelu down7{nullptr}, down5{nullptr}, down3a{nullptr}, down3b{nullptr};
  ConvBnRelu lateral7{nullptr}, lateral5{nullptr};
};
TORCH_MODULE(Fpa);

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int in, int out, int stride);
  torch::Tensor forward(const torch::Tensor& x);

  ConvBnRelu conv1{nullptr}, conv2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

struct GroupedBottleneckImpl : torch::nn::Module {
  GroupedBottleneckImpl(int in, int width, int out, int stride, int groups);
  torch::Tensor forward(const torch::Tensor& x);

  ConvBnRelu reduce{nullptr}, grouped{nullptr}, expand{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(GroupedBottleneck);

/// Backbone returning one scSE-gated feature map per stage.
struct EncoderImpl : torch::nn::Module {
  EncoderImpl(const std::string& backbone_id, int scse_reduction);
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  std::vector<EncoderStage> stages;
  std::vector<torch::nn::Sequential> blocks;
  std::vector<ScSE> gates;
};
TORCH_MODULE(Encoder);

/// Nearest x2 upsample, optional skip concat, two 3x3 conv+BN+ReLU, scSE.
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(int in, int skip, int out, int scse_reduction);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip = {});

  int skip_channels;
  ConvBnRelu conv1{nullptr}, conv2{nullptr};
  ScSE gate{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Upsamples every decoder output to the last one's size, concatenates them
/// and applies 3x3 conv + ReLU then a 1x1 conv to one logit channel.
struct HypercolumnHeadImpl : torch::nn::Module {
  HypercolumnHeadImpl(std::vector<int> in_channels, int mid_channels);
  torch::Tensor forward(const std::vector<torch::Tensor>& decoder_outputs);
  /// The concatenated hypercolumn tensor, before the convolutions.
  torch::Tensor hypercolumns(const std::vector<torch::Tensor>& decoder_outputs) const;

  std::vector<int> in_channels;
  torch::nn::Conv2d conv3{nullptr}, conv1{nullptr};
};
TORCH_MODULE(HypercolumnHead);

struct SaltNetImpl : torch::nn::Module {
  explicit SaltNetImpl(SegmentationModelSpec spec);
  /// (N,1,S,S) -> (N,1,S,S) logits with S = spec.input_size.
  torch::Tensor forward(const torch::Tensor& x);
  std::vector<torch::Tensor> decoder_outputs(const torch::Tensor& x);

  SegmentationModelSpec spec;
  Encoder encoder{nullptr};
  Fpa fpa{nullptr};
  std::vector<DecoderBlock> decoder;
  std::vector<int> skip_index;  // encoder stage feeding each decoder block, -1 for none
  HypercolumnHead head{nullptr};
};
TORCH_MODULE(SaltNet);

/// Builds the network with weights drawn from `seed`; with spec.pretrained the
/// encoder is then overwritten from spec.pretrained_path (IoError if absent).
SaltNet build_model(const SegmentationModelSpec& spec, std::uint64_t seed = 0);

std::int64_t parameter_count(torch::nn::Module& module);

}  // namespace saltseg
