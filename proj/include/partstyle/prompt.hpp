#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "partstyle/texts.hpp"
#include "partstyle/vocab.hpp"
#include "partstyle/vq.hpp"

namespace partstyle {

enum class TemplateId { Reason, Compose, Generate, GlobalToParts };

inline constexpr std::array<TemplateId, 4> kAllTemplates = {TemplateId::Reason, TemplateId::Compose,
                                                            TemplateId::Generate, TemplateId::GlobalToParts};

inline constexpr std::size_t kMaxInputTokens = 512;

std::string_view template_name(TemplateId t);
TemplateId template_from_name(std::string_view name);  // ConfigError if unknown

// The shipped asset, byte for byte, and its FNV-1a hash.
std::string_view template_asset();
std::uint64_t template_asset_hash();
// Body lines of one template joined with single spaces, placeholders intact.
const std::string& template_body(TemplateId t);

struct PromptFields {
  std::optional<std::string> input;
  std::optional<PartTexts> content, style, parts;
};

std::string global_input(std::string_view text);  // "<a person walks>"
// Six sentinel-wrapped blocks in answer order.
std::string motion_input(const Vocabulary& vocab, const std::array<PartTokenSeq, kNumParts>& tokens);
std::string render_part_set(const PartTexts& parts);  // "<Root: ..., ..., Right Leg: ...>"

// ContractError when a placeholder used by the template has no field.
std::string render_prompt_text(TemplateId t, const PromptFields& fields);
// Normalized, encoded, <eos>-terminated; TruncationError above `limit`.
std::vector<int> render_prompt(const Vocabulary& vocab, TemplateId t, const PromptFields& fields,
                               std::size_t limit = kMaxInputTokens);

// "Root: T, Backbone: T, Left Arm: T, Right Arm: T, Left Leg: T, Right Leg: T."
// ContractError for texts the parser could not split back apart.
std::string render_text_answer(const PartTexts& parts);
std::string render_motion_answer(const Vocabulary& vocab, const std::array<PartTokenSeq, kNumParts>& tokens);

enum class AnswerKind { PartTexts, PartMotions };
using ParsedAnswer = std::variant<PartTexts, std::array<PartTokenSeq, kNumParts>>;

// Leading <bos> and anything from the first <eos> on are ignored. ParseError
// names the section and byte offset of the first violation.
PartTexts parse_text_answer(const Vocabulary& vocab, std::span<const int> ids);
std::array<PartTokenSeq, kNumParts> parse_motion_answer(const Vocabulary& vocab, std::span<const int> ids);
ParsedAnswer parse_answer(const Vocabulary& vocab, std::span<const int> ids, AnswerKind kind);

}  // namespace partstyle
