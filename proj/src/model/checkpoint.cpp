// SPDX-License-Identifier: Apache-2.0
#include "stpotr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "stpotr/error.hpp"

namespace stpotr {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'P', 'O', 'T', 'R', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_string(std::istream& in, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated in " + what);
  return s;
}

}  // namespace

Checkpoint snapshot(const StpotrModel& model) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  for (const auto& p : model.parameters()) {
    ckpt.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  const std::string config = nlohmann::json(ckpt.config).dump();
  put<std::uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.values) put<double>(out, v);
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto config_len = get<std::uint64_t>(in, "config length");
  const std::string config = get_string(in, config_len, "config");
  try {
    ckpt.config = nlohmann::json::parse(config).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint config schema error: " + std::string(e.what()));
  }
  const auto count = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const auto name_len = get<std::uint32_t>(in, "name length");
    t.name = get_string(in, name_len, "tensor name");
    const auto rank = get<std::uint32_t>(in, "rank of " + t.name);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(get<std::uint64_t>(in, "shape of " + t.name));
    t.values.resize(numel_of(t.shape));
    for (double& v : t.values) v = get<double>(in, "values of " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint tensors");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const StpotrModel& model) {
  write_checkpoint(path, snapshot(model));
}

void restore_parameters(StpotrModel& model, const Checkpoint& ckpt) {
  std::map<std::string, const CheckpointTensor*> stored;
  for (const auto& t : ckpt.tensors) stored[t.name] = &t;
  std::vector<std::string> missing, mismatched;
  auto params = model.parameters();
  for (const auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      missing.push_back(p.name);
    } else {
      if (it->second->shape != p.tensor.shape()) {
        mismatched.push_back(p.name + " " + shape_str(it->second->shape) + " vs " + shape_str(p.tensor.shape()));
      }
      stored.erase(it);
    }
  }
  if (!missing.empty() || !mismatched.empty() || !stored.empty()) {
    std::string msg = "checkpoint does not match model config:";
    for (const auto& m : missing) msg += " missing " + m + ";";
    for (const auto& m : mismatched) msg += " shape " + m + ";";
    for (const auto& [name, t] : stored) msg += " unexpected " + name + ";";
    throw DataError(msg);
  }
  std::map<std::string, const CheckpointTensor*> lookup;
  for (const auto& t : ckpt.tensors) lookup[t.name] = &t;
  for (auto& p : params) {
    const auto& values = lookup.at(p.name)->values;
    std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
  }
}

StpotrModel load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  StpotrModel model = [&] {
    try {
      return StpotrModel(ckpt.config);
    } catch (const UsageError& e) {
      throw DataError(std::string("checkpoint config invalid: ") + e.what());
    }
  }();
  restore_parameters(model, ckpt);
  return model;
}

}  // namespace stpotr
