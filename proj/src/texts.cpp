#include "partstyle/texts.hpp"

#include <algorithm>
#include <cctype>

namespace partstyle {

bool PartTexts::complete() const {
  return std::all_of(text.begin(), text.end(), [](const std::string& s) { return !s.empty(); });
}

AffinityTable default_affinity() {
  AffinityTable t{};
  t[part_index(BodyPart::LeftArm)] = Affinity::StyleWins;
  t[part_index(BodyPart::RightArm)] = Affinity::StyleWins;
  t[part_index(BodyPart::Backbone)] = Affinity::StyleWins;
  t[part_index(BodyPart::LeftLeg)] = Affinity::Blend;
  t[part_index(BodyPart::RightLeg)] = Affinity::Blend;
  t[part_index(BodyPart::Root)] = Affinity::Blend;
  return t;
}

bool is_rest_text(std::string_view text) {
  static constexpr std::array<std::string_view, 5> kRestWords = {"relaxed", "rest", "still", "stays", "hangs"};
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string word(text.substr(i, j - i));
      std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
      if (std::find(kRestWords.begin(), kRestWords.end(), word) != kRestWords.end()) return true;
    }
    i = j;
  }
  return false;
}

AffinityTable resolve_affinity(const PartTexts& content, const PartTexts& style, AffinityTable base) {
  const auto la = BodyPart::LeftArm, ra = BodyPart::RightArm;
  const bool style_claims_both = !style[la].empty() && !style[ra].empty() &&
                                 base[part_index(la)] == Affinity::StyleWins &&
                                 base[part_index(ra)] == Affinity::StyleWins;
  if (!style_claims_both) return base;
  const bool left_active = !content[la].empty() && !is_rest_text(content[la]);
  const bool right_active = !content[ra].empty() && !is_rest_text(content[ra]);
  if (left_active != right_active) base[part_index(left_active ? la : ra)] = Affinity::ContentWins;
  return base;
}

PartTexts rule_compose(const PartTexts& content, const PartTexts& style, const AffinityTable& affinity) {
  PartTexts out;
  for (auto p : kAllParts) {
    const std::string& c = content[p];
    const std::string& s = style[p];
    std::string& o = out[p];
    if (c == s || s.empty()) {
      o = c;
    } else if (c.empty()) {
      o = s;
    } else {
      switch (affinity[part_index(p)]) {
        case Affinity::ContentWins: o = c; break;
        case Affinity::StyleWins: o = s; break;
        case Affinity::Blend: o = is_rest_text(c) ? c : c + std::string(kBlendConnective) + s; break;
      }
    }
  }
  return out;
}

PartTexts rule_compose(const PartTexts& content, const PartTexts& style) {
  return rule_compose(content, style, resolve_affinity(content, style, default_affinity()));
}

std::string_view affinity_name(Affinity a) {
  switch (a) {
    case Affinity::ContentWins: return "content";
    case Affinity::StyleWins: return "style";
    case Affinity::Blend: return "blend";
  }
  return "?";
}

}  // namespace partstyle
