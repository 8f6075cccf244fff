#include "owvis/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "owvis/error.hpp"

namespace owvis {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'O', 'W', 'V', 'I', 'S', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path.string() + ": truncated checkpoint");
  return v;
}

std::map<std::string, torch::Tensor> named_tensors(OwVisModel& model) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : model->named_parameters()) out[p.key()] = p.value();
  for (const auto& b : model->named_buffers()) out[b.key()] = b.value();
  return out;
}

struct RawTensor {
  torch::Dtype dtype;
  std::vector<int64_t> shape;
  std::vector<char> bytes;
};

CheckpointInfo read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path.string() + ": not an owvis checkpoint");
  CheckpointInfo info;
  info.version = get<std::uint32_t>(in, path);
  if (info.version != kCheckpointVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(info.version));
  const auto len = get<std::uint32_t>(in, path);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw ParseError(path.string() + ": truncated checkpoint header");
  try {
    const json h = json::parse(text);
    info.config = RunConfig::from_json(h.at("config"));
    info.fingerprint = h.at("fingerprint").get<std::string>();
    info.task = h.at("task").get<int>();
    info.registry = ClassRegistry(h.at("known_ids").get<std::vector<CategoryId>>());
    info.registry_history = h.at("registry_history").get<std::vector<std::vector<CategoryId>>>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  return info;
}

std::map<std::string, RawTensor> read_tensors(std::istream& in, const std::filesystem::path& path) {
  std::map<std::string, RawTensor> out;
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    RawTensor t;
    const auto code = get<std::uint8_t>(in, path);
    if (code > 1) throw ParseError(path.string() + ": unknown dtype code for " + name);
    t.dtype = code == 0 ? torch::kFloat32 : torch::kFloat64;
    const auto rank = get<std::uint32_t>(in, path);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<int64_t>(in, path));
    t.bytes.resize(get<std::uint64_t>(in, path));
    in.read(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size()));
    if (!in) throw ParseError(path.string() + ": truncated tensor " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void copy_into(torch::Tensor& dst, const RawTensor& src, const std::string& name) {
  if (dst.sizes().vec() != src.shape) throw ShapeError("checkpoint tensor " + name + " has a different shape");
  const auto t = torch::from_blob(const_cast<char*>(src.bytes.data()), src.shape,
                                  torch::TensorOptions().dtype(src.dtype));
  torch::NoGradGuard guard;
  dst.copy_(t);
}

}  // namespace

void save_checkpoint(OwVisModel& model, const CheckpointInfo& info, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const json header = {{"config", info.config.to_json()},
                       {"fingerprint", info.fingerprint},
                       {"task", info.task},
                       {"known_ids", model->registry().known_ids()},
                       {"registry_history", info.registry_history}};
  const std::string text = header.dump();
  out.write(kMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto tensors = named_tensors(model);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, value] : tensors) {
    const auto t = value.detach().to(torch::kCPU).contiguous();
    if (t.scalar_type() != torch::kFloat32 && t.scalar_type() != torch::kFloat64)
      throw Error("checkpoint: unsupported dtype for " + name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, t.scalar_type() == torch::kFloat32 ? 0 : 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto s : t.sizes()) put<int64_t>(out, s);
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    put<std::uint64_t>(out, nbytes);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
  }
  if (!out) throw Error("failed writing " + path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_header(in, path);
}

OwVisModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const CheckpointInfo info = read_header(in, path);
  const auto raw = read_tensors(in, path);
  OwVisModel model(info.config.model, info.registry);
  if (!raw.empty() && raw.begin()->second.dtype == torch::kFloat64) model->to(torch::kFloat64);
  auto tensors = named_tensors(model);
  if (tensors.size() != raw.size())
    throw ValidationError(path.string() + ": checkpoint holds " + std::to_string(raw.size()) +
                          " tensors, the model has " + std::to_string(tensors.size()));
  for (auto& [name, t] : tensors) {
    const auto it = raw.find(name);
    if (it == raw.end()) throw ValidationError(path.string() + ": missing tensor " + name);
    copy_into(t, it->second, name);
  }
  if (info.config.model.freeze_backbone) model->backbone->set_frozen(true);
  if (info_out) *info_out = info;
  return model;
}

int load_backbone_weights(OwVisModel& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  read_header(in, path);
  const auto raw = read_tensors(in, path);
  auto tensors = named_tensors(model);
  int copied = 0;
  for (const auto& [name, r] : raw) {
    if (name.rfind("backbone.", 0) != 0) continue;
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError(path.string() + ": model has no tensor " + name);
    copy_into(it->second, r, name);
    ++copied;
  }
  return copied;
}

}  // namespace owvis
