#include "partstyle/motion_io.hpp"

#include <cstring>

#include "partstyle/binary_io.hpp"

namespace partstyle {

namespace {
constexpr char kMagic[4] = {'M', 'B', 'I', 'N'};
}

void write_mbin(const std::filesystem::path& path, const MotionSequence& m) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kMbinVersion);
  w.u32(static_cast<std::uint32_t>(m.num_frames()));
  w.u32(static_cast<std::uint32_t>(layout::kFeatureDim));
  for (float v : m.features().data()) w.f32(v);
  w.write_file(path);
}

MotionSequence read_mbin(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not an MBIN file");
  const auto version = r.u32();
  if (version != kMbinVersion) throw IoError(path.string() + ": unsupported MBIN version " + std::to_string(version));
  const std::size_t n = r.u32();
  const std::size_t h = r.u32();
  if (h != layout::kFeatureDim) throw LayoutError(path.string() + ": feature width " + std::to_string(h) + " != 263");
  if (r.remaining() != n * h * 4) throw IoError(path.string() + ": payload size does not match header");
  std::vector<float> data(n * h);
  for (auto& v : data) v = r.f32();
  return MotionSequence(Tensor({n, h}, std::move(data)));
}

MotionSequence read_raw_features(const std::filesystem::path& path) {
  auto bytes = ByteReader::slurp(path);
  constexpr std::size_t frame_bytes = layout::kFeatureDim * 4;
  if (bytes.empty() || bytes.size() % frame_bytes != 0) {
    throw IoError(path.string() + ": size " + std::to_string(bytes.size()) + " bytes is not a positive multiple of " +
                  std::to_string(frame_bytes) + " (263 f32 per frame)");
  }
  const std::size_t n = bytes.size() / frame_bytes;
  ByteReader r(std::move(bytes), path.string());
  std::vector<float> data(n * layout::kFeatureDim);
  for (auto& v : data) v = r.f32();
  return MotionSequence(Tensor({n, layout::kFeatureDim}, std::move(data)));
}

void write_raw_features(const std::filesystem::path& path, const MotionSequence& m) {
  ByteWriter w;
  for (float v : m.features().data()) w.f32(v);
  w.write_file(path);
}

}  // namespace partstyle
