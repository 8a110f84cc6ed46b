#include "partstyle/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "partstyle/binary_io.hpp"

namespace partstyle {

namespace {
constexpr char kMagic[4] = {'P', 'S', 'T', 'C'};
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (float v : t.data()) w.f32(v);
  }
  w.write_file(path);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("checkpoint " + path.string() + ": bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) v = r.f32();
    out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw IoError("checkpoint " + path.string() + ": trailing bytes");
  return out;
}

void load_into(const NamedTensors& tensors, std::vector<Parameter*> params) {
  for (auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw IoError("checkpoint is missing parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw IoError("checkpoint parameter " + p->name + " has shape " + shape_str(it->second.shape()) +
                    ", expected " + shape_str(p->value.shape()));
    }
    p->value = it->second;
    p->zero_grad();
  }
}

NamedTensors collect(const std::vector<Parameter*>& params) {
  NamedTensors out;
  for (auto* p : params) out.emplace(p->name, p->value);
  return out;
}

}  // namespace partstyle
