#pragma once

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "partstyle/corpus.hpp"
#include "partstyle/llm_client.hpp"
#include "partstyle/lm.hpp"
#include "partstyle/prompt.hpp"
#include "partstyle/texts.hpp"
#include "partstyle/vocab.hpp"
#include "partstyle/vq.hpp"

namespace partstyle {

enum class Backend { Local, External, Rule };
std::string_view backend_name(Backend b);
Backend backend_from_name(std::string_view name);  // ConfigError

struct StyleOrContentInput {
  enum class Kind { GlobalText, Motion };
  Kind kind = Kind::GlobalText;
  std::string text;
  MotionSequence motion;

  static StyleOrContentInput from_text(std::string text);
  static StyleOrContentInput from_motion(MotionSequence motion);  // LayoutError when invalid
};

struct PipelineConfig {
  Backend reason_backend = Backend::Local;
  Backend compose_backend = Backend::Local;
  DecodeConfig decode;
  std::size_t min_frames = kMinClipFrames, max_frames = kMaxClipFrames;
  AffinityTable affinity = default_affinity();
};

struct StageRecord {
  std::string stage;
  Backend backend = Backend::Local;
  std::string prompt;
  std::string reply;
  int attempts = 0;
};

struct StylizeResult {
  MotionSequence motion;
  std::array<PartTokenSeq, kNumParts> tokens;
  PartTexts content, style, unified;
  nlohmann::json provenance;
};

// Reason, compose and generate over a trained local model; reasoning and
// composition can go to an external service instead. A reply that fails to
// parse is re-queried once with a format reminder.
class Pipeline {
 public:
  Pipeline(const Vocabulary& vocab, SeqModel& lm, const VqSet& vq, PipelineConfig cfg = {},
           const LlmClient* llm = nullptr);

  const PipelineConfig& config() const noexcept { return cfg_; }

  // Motion inputs always take the local path.
  PartTexts reason(const StyleOrContentInput& in, Backend backend);
  PartTexts compose(const PartTexts& content, const PartTexts& style, Backend backend);
  std::array<PartTokenSeq, kNumParts> generate_tokens(const PartTexts& unified);
  MotionSequence generate_motion(const PartTexts& unified);

  // Stage failures come back as StageError.
  StylizeResult stylize(const StyleOrContentInput& content, const StyleOrContentInput& style);

  const std::vector<StageRecord>& records() const noexcept { return records_; }
  void clear_records() { records_.clear(); }

  std::string model_fingerprint() const;

 private:
  std::string local_reply(const std::string& prompt, std::vector<int>& ids);
  std::string external_reply(std::vector<ChatMessage>& messages);
  PartTexts query_texts(const std::string& stage, TemplateId t, const PromptFields& fields, Backend backend);

  const Vocabulary& vocab_;
  SeqModel& lm_;
  const VqSet& vq_;
  PipelineConfig cfg_;
  const LlmClient* llm_;
  std::vector<StageRecord> records_;
};

inline constexpr std::string_view kFormatReminder =
    "Answer in exactly this format: Root: ..., Backbone: ..., Left Arm: ..., Right Arm: ..., Left Leg: ..., "
    "Right Leg: ... ending with a period.";

// Token ids of an answer followed by <eos>.
std::vector<int> answer_ids(const Vocabulary& vocab, const std::string& answer);

// Per-part translation in both directions: "<Label: text>" to the part's
// sentinel-wrapped block and back.
std::vector<TrainingTask> pretrain_tasks(const Vocabulary& vocab, const TripletSample& sample,
                                         const std::array<PartTokenSeq, kNumParts>& tokens);

struct PosttrainOptions {
  bool reason_global = true;      // <global text> -> parts
  bool reason_motion = true;      // motion blocks -> parts
  bool reason_components = true;  // content and style sentences -> their part sets
  bool compose = true;
  bool generate = true;
};

std::vector<TrainingTask> posttrain_tasks(const Vocabulary& vocab, const TripletSample& sample,
                                          const std::array<PartTokenSeq, kNumParts>& tokens,
                                          const PosttrainOptions& opts = {});

// Drops exact duplicates, keeping first occurrences.
std::vector<TrainingTask> unique_tasks(std::vector<TrainingTask> tasks);

// Merges trained over the template bodies plus every text and rendered
// answer in the samples.
Vocabulary build_pipeline_vocab(const std::vector<TripletSample>& samples, const VocabConfig& cfg = {});

struct VqSetTrainResult {
  VqSet set;
  std::array<std::vector<VqLogEntry>, kNumParts> logs;
};
VqSetTrainResult train_vq_set(const std::vector<TripletSample>& samples,
                              const std::function<VqConfig(BodyPart)>& config_for = default_vq_config);

nlohmann::json part_texts_json(const PartTexts& t);
PartTexts part_texts_from_json(const nlohmann::json& j);
nlohmann::json tokens_json(const std::array<PartTokenSeq, kNumParts>& tokens);

}  // namespace partstyle
