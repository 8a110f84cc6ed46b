#pragma once

#include <array>
#include <string>
#include <string_view>

#include "partstyle/motion.hpp"

namespace partstyle {

// Six body-part texts indexed by part_index().
struct PartTexts {
  std::array<std::string, kNumParts> text;

  const std::string& operator[](BodyPart p) const { return text[part_index(p)]; }
  std::string& operator[](BodyPart p) { return text[part_index(p)]; }
  bool operator==(const PartTexts&) const = default;

  bool complete() const;  // every part nonempty
};

enum class Affinity { ContentWins, StyleWins, Blend };
using AffinityTable = std::array<Affinity, kNumParts>;

inline constexpr std::string_view kBlendConnective = " while ";

// Arms and backbone take the style; legs and root blend both clauses.
AffinityTable default_affinity();

// True when an arm text describes an arm at rest.
bool is_rest_text(std::string_view text);

// Default table adjusted for one-armed content: when the style claims both
// arms and the content is active on exactly one of them, that arm keeps the
// content text.
AffinityTable resolve_affinity(const PartTexts& content, const PartTexts& style, AffinityTable base);

// Per-part selection. Identical texts pass through; an empty clause yields
// the other one.
PartTexts rule_compose(const PartTexts& content, const PartTexts& style, const AffinityTable& affinity);
PartTexts rule_compose(const PartTexts& content, const PartTexts& style);

std::string_view affinity_name(Affinity a);

}  // namespace partstyle
