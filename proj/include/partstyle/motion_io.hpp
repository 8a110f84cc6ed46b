#pragma once

#include <filesystem>

#include "partstyle/motion.hpp"

namespace partstyle {

// "MBIN v1": magic "MBIN", u32 version, u32 N, u32 H (=263), then N·H
// little-endian f32 values, row-major.
inline constexpr std::uint32_t kMbinVersion = 1;

void write_mbin(const std::filesystem::path& path, const MotionSequence& m);
MotionSequence read_mbin(const std::filesystem::path& path);

// Headerless N×263 f32 little-endian array; N is inferred from the size.
MotionSequence read_raw_features(const std::filesystem::path& path);
void write_raw_features(const std::filesystem::path& path, const MotionSequence& m);

}  // namespace partstyle
