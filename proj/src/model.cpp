#include "saltseg/model.hpp"

#include <bit>
#include <set>

#include "saltseg/checkpoint.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/hashing.hpp"

namespace F = torch::nn::functional;
using nlohmann::json;

namespace saltseg {

// ---------------------------------------------------------------------------
// Spec

std::vector<EncoderStage> encoder_stages(const std::string& backbone_id) {
  if (backbone_id == kResidual34) return {{64, 2}, {64, 4}, {128, 8}, {256, 16}, {512, 32}};
  if (backbone_id == kResidualGrouped50) return {{64, 2}, {256, 4}, {512, 8}, {1024, 16}, {2048, 32}};
  if (backbone_id == kTinyTest) return {{8, 1}, {16, 2}, {24, 4}, {32, 8}};
  throw ConfigError("unknown backbone_id '" + backbone_id + "'");
}

SegmentationModelSpec residual34_spec() { return SegmentationModelSpec{}; }

SegmentationModelSpec residual_grouped50_spec() {
  SegmentationModelSpec spec;
  spec.backbone_id = kResidualGrouped50;
  return spec;
}

SegmentationModelSpec tiny_test_spec(int input_size) {
  SegmentationModelSpec spec;
  spec.backbone_id = kTinyTest;
  spec.scse_reduction = 4;
  spec.decoder_channels = {24, 16, 8};
  spec.input_size = input_size;
  spec.fpa_channels = 32;
  spec.fpa_pyramid_channels = 1;
  spec.head_channels = 8;
  return spec;
}

void SegmentationModelSpec::validate() const {
  const auto stages = encoder_stages(backbone_id);
  const int last_stride = stages.back().stride;
  const auto blocks = static_cast<std::size_t>(std::countr_zero(static_cast<unsigned>(last_stride)));
  if (decoder_channels.size() != blocks)
    throw ConfigError(backbone_id + " needs " + std::to_string(blocks) + " decoder widths, got " +
                      std::to_string(decoder_channels.size()));
  if (scse_reduction <= 0) throw ConfigError("scse_reduction must be positive");
  auto check_gate = [&](int channels, const std::string& where) {
    if (channels <= 0) throw ConfigError(where + " width must be positive");
    if (channels % scse_reduction != 0)
      throw ConfigError(where + " width " + std::to_string(channels) + " is not divisible by scse_reduction " +
                        std::to_string(scse_reduction));
  };
  for (std::size_t i = 0; i < stages.size(); ++i) check_gate(stages[i].channels, "encoder stage " + std::to_string(i));
  for (std::size_t i = 0; i < decoder_channels.size(); ++i)
    check_gate(decoder_channels[i], "decoder block " + std::to_string(i));
  if (fpa_channels <= 0 || head_channels <= 0) throw ConfigError("fpa/head widths must be positive");
  if (fpa_pyramid_channels != 1 && fpa_pyramid_channels != fpa_channels)
    throw ConfigError("fpa_pyramid_channels must be 1 or equal to fpa_channels");
  if (input_size <= 0 || input_size % last_stride != 0)
    throw ConfigError("input_size " + std::to_string(input_size) + " must be a positive multiple of " +
                      std::to_string(last_stride));
  if (input_size / last_stride < 8)
    throw ConfigError("bottleneck would be " + std::to_string(input_size / last_stride) +
                      " px; the pyramid attention block needs at least 8");
  if (pretrained && pretrained_path.empty()) throw ConfigError("pretrained=true requires pretrained_path");
}

json SegmentationModelSpec::to_json() const {
  return json{{"backbone", backbone_id},
              {"pretrained", pretrained},
              {"pretrained_path", pretrained_path},
              {"scse_reduction", scse_reduction},
              {"decoder_channels", decoder_channels},
              {"input_size", input_size},
              {"fpa_channels", fpa_channels},
              {"fpa_pyramid_channels", fpa_pyramid_channels},
              {"head_channels", head_channels}};
}

SegmentationModelSpec SegmentationModelSpec::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model spec must be an object");
  static const std::set<std::string> known{"backbone",   "pretrained",   "pretrained_path",
                                           "scse_reduction", "decoder_channels", "input_size",
                                           "fpa_channels", "fpa_pyramid_channels", "head_channels"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown model spec key '" + key + "'");

  SegmentationModelSpec spec;
  const std::string backbone = j.value("backbone", std::string(kResidual34));
  if (backbone == kTinyTest)
    spec = tiny_test_spec();
  else if (backbone == kResidualGrouped50)
    spec = residual_grouped50_spec();
  else if (backbone == kResidual34)
    spec = residual34_spec();
  else
    throw ConfigError("unknown backbone_id '" + backbone + "'");
  try {
    spec.pretrained = j.value("pretrained", spec.pretrained);
    spec.pretrained_path = j.value("pretrained_path", spec.pretrained_path);
    spec.scse_reduction = j.value("scse_reduction", spec.scse_reduction);
    spec.decoder_channels = j.value("decoder_channels", spec.decoder_channels);
    spec.input_size = j.value("input_size", spec.input_size);
    spec.fpa_channels = j.value("fpa_channels", spec.fpa_channels);
    spec.fpa_pyramid_channels = j.value("fpa_pyramid_channels", spec.fpa_pyramid_channels);
    spec.head_channels = j.value("head_channels", spec.head_channels);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model spec value: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string SegmentationModelSpec::hash() const {
  json arch = to_json();
  arch.erase("pretrained");
  arch.erase("pretrained_path");
  return to_hex(fnv1a64(arch.dump()));
}

// ---------------------------------------------------------------------------
// Building blocks

ConvBnReluImpl::ConvBnReluImpl(int in, int out, int kernel, int stride, int groups, bool relu_)
    : relu(relu_) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                                       .stride(stride)
                                                       .padding(kernel / 2)
                                                       .groups(groups)
                                                       .bias(false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(out));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) {
  auto y = bn(conv(x));
  return relu ? torch::relu(y) : y;
}

ScSEImpl::ScSEImpl(int channels, int reduction) {
  if (reduction <= 0 || channels % reduction != 0)
    throw ConfigError("scSE: " + std::to_string(channels) + " channels not divisible by reduction " +
                      std::to_string(reduction));
  squeeze = register_module("squeeze", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels / reduction, 1)));
  excite = register_module("excite", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels / reduction, channels, 1)));
  spatial = register_module("spatial", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1)));
}

torch::Tensor ScSEImpl::channel_gate(const torch::Tensor& x) {
  auto pooled = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
  return torch::sigmoid(excite(torch::relu(squeeze(pooled))));
}

torch::Tensor ScSEImpl::spatial_gate(const torch::Tensor& x) { return torch::sigmoid(spatial(x)); }

torch::Tensor ScSEImpl::forward(const torch::Tensor& x) { return x * channel_gate(x) + x * spatial_gate(x); }

FpaImpl::FpaImpl(int in, int out, int pyramid) {
  master = register_module("master", ConvBnRelu(in, out, 1));
  // Global branch sees a 1x1 map; no normalization there.
  global = register_module("global", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
  down7 = register_module("down7", ConvBnRelu(in, pyramid, 7));
  down5 = register_module("down5", ConvBnRelu(pyramid, pyramid, 5));
  down3a = register_module("down3a", ConvBnRelu(pyramid, pyramid, 3));
  down3b = register_module("down3b", ConvBnRelu(pyramid, pyramid, 3));
  lateral7 = register_module("lateral7", ConvBnRelu(pyramid, pyramid, 7));
  lateral5 = register_module("lateral5", ConvBnRelu(pyramid, pyramid, 5));
}

torch::Tensor FpaImpl::attention(const torch::Tensor& x) {
  auto up = [](const torch::Tensor& t, const torch::Tensor& like) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  };
  auto pool = [](const torch::Tensor& t) { return F::max_pool2d(t, F::MaxPool2dFuncOptions(2).stride(2)); };
  auto level1 = down7(pool(x));        // 1/2
  auto level2 = down5(pool(level1));   // 1/4
  auto level3 = down3b(down3a(pool(level2)));  // 1/8
  auto merged = lateral5(level2) + up(level3, level2);
  merged = lateral7(level1) + up(merged, level1);
  return up(merged, x);
}

torch::Tensor FpaImpl::forward(const torch::Tensor& x) {
  if (x.size(2) < 8 || x.size(3) < 8)
    throw ConfigError("pyramid attention needs at least 8x8 input, got " + std::to_string(x.size(2)) + "x" +
                      std::to_string(x.size(3)));
  auto pooled = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
  auto global_term = torch::relu(global(pooled)).expand({-1, -1, x.size(2), x.size(3)});
  return master(x) * attention(x) + global_term;
}

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride) {
  conv1 = register_module("conv1", ConvBnRelu(in, out, 3, stride));
  conv2 = register_module("conv2", ConvBnRelu(out, out, 3, 1, 1, false));
  if (stride != 1 || in != out)
    shortcut = register_module("shortcut", torch::nn::Sequential(ConvBnRelu(in, out, 1, stride, 1, false)));
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto identity = shortcut ? shortcut->forward(x) : x;
  return torch::relu(conv2(conv1(x)) + identity);
}

GroupedBottleneckImpl::GroupedBottleneckImpl(int in, int width, int out, int stride, int groups) {
  reduce = register_module("reduce", ConvBnRelu(in, width, 1));
  grouped = register_module("grouped", ConvBnRelu(width, width, 3, stride, groups));
  expand = register_module("expand", ConvBnRelu(width, out, 1, 1, 1, false));
  if (stride != 1 || in != out)
    shortcut = register_module("shortcut", torch::nn::Sequential(ConvBnRelu(in, out, 1, stride, 1, false)));
}

torch::Tensor GroupedBottleneckImpl::forward(const torch::Tensor& x) {
  auto identity = shortcut ? shortcut->forward(x) : x;
  return torch::relu(expand(grouped(reduce(x))) + identity);
}

namespace {

torch::nn::MaxPool2d stem_pool() {
  return torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2).padding(1));
}

torch::nn::Sequential residual_stage(int in, int out, int count, int stride, bool pool = false) {
  torch::nn::Sequential seq;
  if (pool) seq->push_back(stem_pool());
  seq->push_back(BasicBlock(in, out, stride));
  for (int i = 1; i < count; ++i) seq->push_back(BasicBlock(out, out, 1));
  return seq;
}

torch::nn::Sequential grouped_stage(int in, int width, int out, int count, int stride, bool pool = false) {
  constexpr int kGroups = 32;
  torch::nn::Sequential seq;
  if (pool) seq->push_back(stem_pool());
  seq->push_back(GroupedBottleneck(in, width, out, stride, kGroups));
  for (int i = 1; i < count; ++i) seq->push_back(GroupedBottleneck(out, width, out, 1, kGroups));
  return seq;
}

torch::nn::Sequential stem() { return torch::nn::Sequential(ConvBnRelu(1, 64, 7, 2)); }

torch::nn::Sequential tiny_stage(int in, int out, bool pool) {
  torch::nn::Sequential seq;
  if (pool) seq->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
  seq->push_back(ConvBnRelu(in, out, 3));
  seq->push_back(ConvBnRelu(out, out, 3));
  return seq;
}

}  // namespace

EncoderImpl::EncoderImpl(const std::string& backbone_id, int scse_reduction) {
  stages = encoder_stages(backbone_id);
  if (backbone_id == kResidual34) {
    blocks.push_back(stem());
    blocks.push_back(residual_stage(64, 64, 3, 1, true));
    blocks.push_back(residual_stage(64, 128, 4, 2));
    blocks.push_back(residual_stage(128, 256, 6, 2));
    blocks.push_back(residual_stage(256, 512, 3, 2));
  } else if (backbone_id == kResidualGrouped50) {
    blocks.push_back(stem());
    blocks.push_back(grouped_stage(64, 128, 256, 3, 1, true));
    blocks.push_back(grouped_stage(256, 256, 512, 4, 2));
    blocks.push_back(grouped_stage(512, 512, 1024, 6, 2));
    blocks.push_back(grouped_stage(1024, 1024, 2048, 3, 2));
  } else {
    int in = 1;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      blocks.push_back(tiny_stage(in, stages[i].channels, i > 0));
      in = stages[i].channels;
    }
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    register_module("stage" + std::to_string(i), blocks[i]);
    gates.push_back(register_module("scse" + std::to_string(i), ScSE(stages[i].channels, scse_reduction)));
  }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features;
  features.reserve(blocks.size());
  torch::Tensor y = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    y = gates[i](blocks[i]->forward(y));
    features.push_back(y);
  }
  return features;
}

DecoderBlockImpl::DecoderBlockImpl(int in, int skip, int out, int scse_reduction) : skip_channels(skip) {
  conv1 = register_module("conv1", ConvBnRelu(in + skip, out, 3));
  conv2 = register_module("conv2", ConvBnRelu(out, out, 3));
  gate = register_module("scse", ScSE(out, scse_reduction));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  if (skip_channels > 0) {
    if (!skip.defined() || skip.size(1) != skip_channels)
      throw ShapeError("decoder block expected a skip tensor with " + std::to_string(skip_channels) + " channels");
    y = torch::cat({y, skip}, 1);
  }
  return gate(conv2(conv1(y)));
}

HypercolumnHeadImpl::HypercolumnHeadImpl(std::vector<int> in, int mid) : in_channels(std::move(in)) {
  int total = 0;
  for (int c : in_channels) total += c;
  conv3 = register_module("conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(total, mid, 3).padding(1)));
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, 1, 1)));
}

torch::Tensor HypercolumnHeadImpl::hypercolumns(const std::vector<torch::Tensor>& outputs) const {
  if (outputs.size() != in_channels.size())
    throw ConfigError("hypercolumn head configured for " + std::to_string(in_channels.size()) +
                      " decoder outputs, got " + std::to_string(outputs.size()));
  const auto batch = outputs.front().size(0);
  const auto& last = outputs.back();
  std::vector<torch::Tensor> upsampled;
  upsampled.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& t = outputs[i];
    if (t.size(0) != batch) throw ShapeError("decoder outputs disagree on batch size");
    if (t.size(1) != in_channels[i])
      throw ConfigError("decoder output " + std::to_string(i) + " has " + std::to_string(t.size(1)) +
                        " channels, head expects " + std::to_string(in_channels[i]));
    if (t.size(2) == last.size(2) && t.size(3) == last.size(3)) {
      upsampled.push_back(t);
    } else {
      upsampled.push_back(F::interpolate(t, F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{last.size(2), last.size(3)})
                                                .mode(torch::kBilinear)
                                                .align_corners(false)));
    }
  }
  return torch::cat(upsampled, 1);
}

torch::Tensor HypercolumnHeadImpl::forward(const std::vector<torch::Tensor>& outputs) {
  return conv1(torch::relu(conv3(hypercolumns(outputs))));
}

SaltNetImpl::SaltNetImpl(SegmentationModelSpec spec_) : spec(std::move(spec_)) {
  spec.validate();
  encoder = register_module("encoder", Encoder(spec.backbone_id, spec.scse_reduction));
  const auto& stages = encoder->stages;
  fpa = register_module("fpa", Fpa(stages.back().channels, spec.fpa_channels, spec.fpa_pyramid_channels));

  int in = spec.fpa_channels;
  int stride = stages.back().stride;
  for (std::size_t j = 0; j < spec.decoder_channels.size(); ++j) {
    stride /= 2;
    int skip = -1;
    for (std::size_t s = 0; s < stages.size(); ++s)
      if (stages[s].stride == stride) skip = static_cast<int>(s);
    const int skip_ch = skip >= 0 ? stages[static_cast<std::size_t>(skip)].channels : 0;
    decoder.push_back(register_module("decoder" + std::to_string(j),
                                      DecoderBlock(in, skip_ch, spec.decoder_channels[j], spec.scse_reduction)));
    skip_index.push_back(skip);
    in = spec.decoder_channels[j];
  }
  head = register_module("head", HypercolumnHead(spec.decoder_channels, spec.head_channels));
}

std::vector<torch::Tensor> SaltNetImpl::decoder_outputs(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != spec.input_size || x.size(3) != spec.input_size)
    throw ShapeError("model expects (N,1," + std::to_string(spec.input_size) + "," +
                     std::to_string(spec.input_size) + ") input, got " + c10::str(x.sizes()));
  auto features = encoder(x);
  auto y = fpa(features.back());
  std::vector<torch::Tensor> outputs;
  outputs.reserve(decoder.size());
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const int s = skip_index[j];
    y = decoder[j](y, s >= 0 ? features[static_cast<std::size_t>(s)] : torch::Tensor{});
    outputs.push_back(y);
  }
  return outputs;
}

torch::Tensor SaltNetImpl::forward(const torch::Tensor& x) { return head(decoder_outputs(x)); }

SaltNet build_model(const SegmentationModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  torch::manual_seed(seed);
  SaltNet net(spec);
  if (spec.pretrained) load_pretrained_encoder(*net, spec.pretrained_path);
  return net;
}

std::int64_t parameter_count(torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace saltseg
