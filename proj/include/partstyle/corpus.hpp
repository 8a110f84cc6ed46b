#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "partstyle/motion.hpp"
#include "partstyle/texts.hpp"

namespace partstyle {

enum class ContentKind { Walk, WalkCircle, Wave, Throw, Jump, Idle };

struct ContentSpec {
  std::string id;
  ContentKind kind = ContentKind::Idle;
  std::string global_text;
  PartTexts parts;
  double base_speed = 0.0;  // m/s
};

struct StyleSpec {
  std::string id;
  std::string global_text;    // e.g. "arms raised overhead"
  std::string global_suffix;  // appended to a content sentence
  PartTexts parts;            // empty entries leave the content untouched
  std::optional<double> arm_elevation_deg;
  std::optional<double> arm_swing_deg;
  std::optional<double> spine_pitch_deg;
  double speed_scale = 1.0;
  double tempo = 1.0;
};

const std::vector<ContentSpec>& content_specs();
const std::vector<StyleSpec>& style_specs();
const ContentSpec& content_spec(std::string_view id);
const StyleSpec& style_spec(std::string_view id);

struct CompositionRecord {
  std::string content_text;  // global sentences fed to reasoning
  std::string style_text;
  PartTexts content;
  PartTexts style;
  PartTexts unified;

  bool operator==(const CompositionRecord&) const = default;
};

struct TripletSample {
  std::string id;
  MotionSequence motion;
  std::string global_text;
  PartTexts parts;
  std::optional<std::string> style_label;
  std::optional<std::string> content_label;
  std::optional<CompositionRecord> composition;
  std::uint64_t seed = 0;

  bool operator==(const TripletSample&) const = default;
};

// Resolved per-sample parameters; the same values drive features and texts.
struct SynthParams {
  double speed = 0.0;    // m/s
  double cadence = 0.9;  // gait cycles per second
  double phase = 0.0;    // [0,1)
  double tempo = 1.0;
  double spine_pitch_deg = 0.0;
  std::optional<double> arm_elevation_deg;
  double arm_swing_deg = 20.0;
  bool left_arm_styled = false;
  bool right_arm_styled = false;
  bool backbone_styled = false;
};

SynthParams resolve_params(const ContentSpec& content, const StyleSpec& style, std::uint64_t seed);

struct SynthConfig {
  std::size_t min_frames = 40;
  std::size_t max_frames = 196;
};

inline constexpr std::size_t kMinClipFrames = 40;
inline constexpr std::size_t kMaxClipFrames = 196;

// frames must lie in [40, 196].
TripletSample synth_generate(const ContentSpec& content, const StyleSpec& style, std::size_t frames,
                             std::uint64_t seed);

// Cycles through every (content, style) pair with per-sample seeds derived
// from `seed`; frame counts are drawn from [min_frames, max_frames].
std::vector<TripletSample> generate_corpus(std::size_t count, std::uint64_t seed, SynthConfig cfg = {});

// Dataset directory: index.json, motions/<id>.mbin, texts/<id>.json.
inline constexpr int kDatasetVersion = 1;
void save_dataset(const std::vector<TripletSample>& samples, const std::filesystem::path& dir);
std::vector<TripletSample> load_dataset(const std::filesystem::path& dir);

// Disjoint, covering, seed-deterministic; stratified by style label.
std::map<std::string, std::vector<TripletSample>> split(const std::vector<TripletSample>& samples,
                                                        const std::vector<std::pair<std::string, double>>& ratios,
                                                        std::uint64_t seed);

// Headerless N×263 f32 feature file; rejects bad sizes and non-finite data.
MotionSequence import_humanml3d_features(const std::filesystem::path& file);

}  // namespace partstyle
