#include "saltseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "saltseg/errors.hpp"
#include "saltseg/hashing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace saltseg {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'L', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw ValidationError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  throw FormatError("unknown tensor dtype '" + name + "'");
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(SaltNetImpl& net) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : net.named_parameters()) out.emplace_back(item.key(), item.value());
  for (const auto& item : net.named_buffers()) out.emplace_back(item.key(), item.value());
  return out;
}

json manifest_of(const ModelParameters& params, json index) {
  return json{{"spec", params.spec},         {"spec_hash", params.spec_hash},
              {"round_tag", params.round_tag}, {"fold_tag", params.fold_tag},
              {"snapshot_tag", params.snapshot_tag}, {"epoch", params.epoch},
              {"extra", params.extra},       {"tensors", std::move(index)}};
}

}  // namespace

std::string ModelParameters::content_hash() const {
  std::uint64_t h = fnv1a64(spec_hash);
  for (const auto& t : tensors) {
    h = fnv1a64(t.name, h);
    const auto c = t.value.contiguous();
    for (auto d : c.sizes()) h = fnv1a64_bytes(&d, sizeof(d), h);
    h = fnv1a64(dtype_name(c.scalar_type()), h);
    h = fnv1a64_bytes(c.data_ptr(), static_cast<std::size_t>(c.nbytes()), h);
  }
  return to_hex(h);
}

ModelParameters capture_parameters(SaltNetImpl& net) {
  torch::NoGradGuard no_grad;
  ModelParameters params;
  params.spec = net.spec.to_json();
  params.spec_hash = net.spec.hash();
  for (auto& [name, value] : named_state(net)) params.tensors.push_back({name, value.detach().clone()});
  return params;
}

void apply_parameters(SaltNetImpl& net, const ModelParameters& params) {
  if (params.spec_hash != net.spec.hash())
    throw CompatibilityError("parameters were produced for spec " + params.spec_hash + ", model is " +
                             net.spec.hash());
  auto state = named_state(net);
  if (state.size() != params.tensors.size())
    throw CompatibilityError("parameter count mismatch: " + std::to_string(params.tensors.size()) + " vs " +
                             std::to_string(state.size()));
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& src = params.tensors[i];
    auto& [name, dst] = state[i];
    if (src.name != name || !src.value.sizes().equals(dst.sizes()))
      throw CompatibilityError("tensor '" + src.name + "' does not match model tensor '" + name + "'");
    dst.copy_(src.value);
  }
}

void save_checkpoint(const fs::path& path, const ModelParameters& params) {
  json index = json::array();
  std::uint64_t offset = 0;
  std::vector<torch::Tensor> blobs;
  for (const auto& t : params.tensors) {
    auto c = t.value.contiguous().cpu();
    index.push_back({{"name", t.name},
                     {"dtype", dtype_name(c.scalar_type())},
                     {"shape", c.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", c.nbytes()}});
    offset += c.nbytes();
    blobs.push_back(std::move(c));
  }
  const std::string manifest = manifest_of(params, std::move(index)).dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::uint64_t length = manifest.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& b : blobs) out.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.nbytes()));
    if (!out) throw IoError("write failed for checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

namespace {

json read_header(std::ifstream& in, const fs::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(path.string() + " is not a checkpoint");
  if (version != kVersion) throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::string manifest(length, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError(path.string() + ": truncated manifest");
  try {
    return json::parse(manifest);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": corrupt manifest: " + e.what());
  }
}

}  // namespace

json read_checkpoint_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

ModelParameters load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const json manifest = read_header(in, path);
  const auto data_start = in.tellg();

  ModelParameters params;
  try {
    params.spec = manifest.at("spec");
    params.spec_hash = manifest.at("spec_hash").get<std::string>();
    params.round_tag = manifest.at("round_tag").get<int>();
    params.fold_tag = manifest.at("fold_tag").get<int>();
    params.snapshot_tag = manifest.at("snapshot_tag").get<int>();
    params.epoch = manifest.at("epoch").get<int>();
    params.extra = manifest.value("extra", json::object());
    for (const auto& entry : manifest.at("tensors")) {
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto dtype = dtype_from_name(entry.at("dtype").get<std::string>());
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (static_cast<std::uint64_t>(tensor.nbytes()) != nbytes)
        throw IoError(path.string() + ": size mismatch for tensor " + entry.at("name").get<std::string>());
      in.seekg(data_start + static_cast<std::streamoff>(offset));
      in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!in) throw IoError(path.string() + ": truncated tensor data");
      params.tensors.push_back({entry.at("name").get<std::string>(), std::move(tensor)});
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
  return params;
}

void load_pretrained_encoder(SaltNetImpl& net, const fs::path& path) {
  if (!fs::exists(path)) throw IoError("pretrained weights not found: " + path.string());
  const ModelParameters source = load_checkpoint(path);
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& t : source.tensors) by_name[t.name] = &t.value;

  torch::NoGradGuard no_grad;
  for (auto& [name, dst] : named_state(net)) {
    if (name.rfind("encoder.", 0) != 0) continue;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CompatibilityError(path.string() + " lacks encoder tensor '" + name + "'");
    if (!it->second->sizes().equals(dst.sizes()))
      throw CompatibilityError(path.string() + ": shape mismatch for '" + name + "'");
    dst.copy_(*it->second);
  }
}

SaltNet instantiate(const ModelParameters& params) {
  auto spec = SegmentationModelSpec::from_json(params.spec);
  spec.pretrained = false;  // weights come from the checkpoint itself
  if (spec.hash() != params.spec_hash)
    throw CompatibilityError("embedded spec hashes to " + spec.hash() + " but checkpoint says " + params.spec_hash);
  SaltNet net(spec);
  apply_parameters(*net, params);
  return net;
}

}  // namespace saltseg
