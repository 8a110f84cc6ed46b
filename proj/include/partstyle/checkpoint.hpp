#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "partstyle/tensor.hpp"

namespace partstyle {

// Named-tensor container:
//   magic "PSTC", u32 version, u32 count, then per record
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f32 payload.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::map<std::string, Tensor>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// Copies matching entries into parameters; every parameter must be present
// with an identical shape.
void load_into(const NamedTensors& tensors, std::vector<Parameter*> params);
NamedTensors collect(const std::vector<Parameter*>& params);

}  // namespace partstyle
