#include "partstyle/prompt.hpp"

#include <algorithm>
#include <map>

#include "partstyle/hash.hpp"

namespace partstyle {

namespace detail {
extern const std::string_view kTemplateAsset;
}

namespace {

constexpr std::array<std::string_view, 4> kPlaceholders = {"input", "content", "style", "parts"};

std::map<TemplateId, std::string> parse_asset(std::string_view asset) {
  std::map<TemplateId, std::string> out;
  std::string* body = nullptr;
  std::size_t pos = 0;
  while (pos <= asset.size()) {
    std::size_t end = asset.find('\n', pos);
    if (end == std::string_view::npos) end = asset.size();
    std::string_view line = asset.substr(pos, end - pos);
    pos = end + 1;
    if (line.substr(0, 3) == "@@ ") {
      const auto id = template_from_name(line.substr(3));
      if (out.count(id)) throw ConfigError("template asset: duplicate template " + std::string(line.substr(3)));
      body = &out[id];
    } else if (body && !line.empty()) {
      if (!body->empty()) body->push_back(' ');
      *body += line;
    } else if (!body && !line.empty() && line[0] != '#') {
      throw ConfigError("template asset: text before the first template header");
    }
  }
  for (auto t : kAllTemplates)
    if (!out.count(t)) throw ConfigError("template asset: missing template " + std::string(template_name(t)));
  return out;
}

const std::map<TemplateId, std::string>& templates() {
  static const auto t = parse_asset(template_asset());
  return t;
}

std::string label_marker(std::size_t k) {
  return (k == 0 ? "" : ", ") + std::string(part_label(kAnswerOrder[k])) + ": ";
}

bool has_label_marker(std::string_view text) {
  for (std::size_t k = 1; k < kNumParts; ++k)
    if (text.find(label_marker(k)) != std::string_view::npos) return true;
  return text.find(", " + label_marker(0)) != std::string_view::npos;
}

std::string motion_block(const Vocabulary& vocab, BodyPart p, const std::vector<int>& codes) {
  std::string s = vocab.token(vocab.som(p));
  for (int c : codes) {
    vocab.motion_id(p, c);  // range check
    s += ' ';
    s += motion_token_form(p, c);
  }
  s += ' ';
  s += vocab.token(vocab.eom(p));
  return s;
}

std::string answer_text(const Vocabulary& vocab, std::span<const int> ids) {
  std::size_t b = 0, e = ids.size();
  if (b < e && ids[b] == Vocabulary::kBos) ++b;
  for (std::size_t i = b; i < e; ++i) {
    if (ids[i] == Vocabulary::kEos) {
      e = i;
      break;
    }
  }
  return vocab.decode(ids.subspan(b, e - b));
}

std::array<std::string, kNumParts> split_sections(std::string_view s) {
  std::array<std::string, kNumParts> out;
  const std::string first = label_marker(0);
  if (s.substr(0, first.size()) != first) throw ParseError("expected '" + first + "'", "byte 0");
  std::size_t pos = first.size();
  for (std::size_t k = 0; k < kNumParts; ++k) {
    const std::string_view label = part_label(kAnswerOrder[k]);
    std::size_t end;
    if (k + 1 < kNumParts) {
      end = s.find(label_marker(k + 1), pos);
      if (end == std::string_view::npos)
        throw ParseError("missing " + std::string(part_label(kAnswerOrder[k + 1])) + " section",
                         "byte " + std::to_string(pos));
    } else {
      if (s.empty() || s.back() != '.' || s.size() - 1 < pos)
        throw ParseError("unterminated " + std::string(label) + " section", "byte " + std::to_string(s.size()));
      end = s.size() - 1;
    }
    out[k] = std::string(s.substr(pos, end - pos));
    if (has_label_marker(out[k]))
      throw ParseError("out-of-order label inside " + std::string(label) + " section", "byte " + std::to_string(pos));
    pos = end + (k + 1 < kNumParts ? label_marker(k + 1).size() : 1);
  }
  return out;
}

}  // namespace

std::string_view template_name(TemplateId t) {
  switch (t) {
    case TemplateId::Reason: return "Reason";
    case TemplateId::Compose: return "Compose";
    case TemplateId::Generate: return "Generate";
    case TemplateId::GlobalToParts: return "GlobalToParts";
  }
  return "?";
}

TemplateId template_from_name(std::string_view name) {
  for (auto t : kAllTemplates)
    if (template_name(t) == name) return t;
  throw ConfigError("unknown template '" + std::string(name) + "'");
}

std::string_view template_asset() { return detail::kTemplateAsset; }

std::uint64_t template_asset_hash() { return fnv1a64(template_asset()); }

const std::string& template_body(TemplateId t) { return templates().at(t); }

std::string global_input(std::string_view text) { return "<" + std::string(text) + ">"; }

std::string motion_input(const Vocabulary& vocab, const std::array<PartTokenSeq, kNumParts>& tokens) {
  std::string s;
  for (auto p : kAnswerOrder) {
    if (!s.empty()) s += ' ';
    s += motion_block(vocab, p, tokens[part_index(p)].codes);
  }
  return s;
}

std::string render_part_set(const PartTexts& parts) {
  std::string s = "<";
  for (std::size_t k = 0; k < kNumParts; ++k) s += label_marker(k) + parts[kAnswerOrder[k]];
  return s + ">";
}

std::string render_prompt_text(TemplateId t, const PromptFields& f) {
  const std::string& body = template_body(t);
  std::string out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t open = body.find('{', pos);
    if (open == std::string::npos) {
      out.append(body, pos);
      break;
    }
    const std::size_t close = body.find('}', open);
    const std::string name = close == std::string::npos ? "" : body.substr(open + 1, close - open - 1);
    std::optional<std::string> value;
    if (name == "input") value = f.input;
    else if (name == "content" && f.content) value = render_part_set(*f.content);
    else if (name == "style" && f.style) value = render_part_set(*f.style);
    else if (name == "parts" && f.parts) value = render_part_set(*f.parts);
    else if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
      out.append(body, pos, open - pos + 1);
      pos = open + 1;
      continue;
    }
    if (!value)
      throw ContractError(std::string(template_name(t)) + " template needs a value for {" + name + "}");
    out.append(body, pos, open - pos);
    out += *value;
    pos = close + 1;
  }
  return out;
}

std::vector<int> render_prompt(const Vocabulary& vocab, TemplateId t, const PromptFields& fields, std::size_t limit) {
  auto ids = vocab.encode(normalize_whitespace(render_prompt_text(t, fields)));
  ids.push_back(Vocabulary::kEos);
  if (ids.size() > limit) throw TruncationError(ids.size(), limit);
  return ids;
}

std::string render_text_answer(const PartTexts& parts) {
  std::string s;
  for (std::size_t k = 0; k < kNumParts; ++k) {
    const std::string& t = parts[kAnswerOrder[k]];
    if (t != normalize_whitespace(t) || (!t.empty() && (t.front() == ' ' || t.back() == ' ')) || has_label_marker(t) ||
        t.find("<eos>") != std::string::npos || t.find("<bos>") != std::string::npos ||
        t.find("<pad>") != std::string::npos)
      throw ContractError(std::string(part_label(kAnswerOrder[k])) + " text cannot be rendered unambiguously");
    s += label_marker(k) + t;
  }
  return s + ".";
}

std::string render_motion_answer(const Vocabulary& vocab, const std::array<PartTokenSeq, kNumParts>& tokens) {
  std::string s;
  for (std::size_t k = 0; k < kNumParts; ++k) {
    const auto p = kAnswerOrder[k];
    s += label_marker(k) + motion_block(vocab, p, tokens[part_index(p)].codes);
  }
  return s + ".";
}

PartTexts parse_text_answer(const Vocabulary& vocab, std::span<const int> ids) {
  const auto sections = split_sections(answer_text(vocab, ids));
  PartTexts out;
  for (std::size_t k = 0; k < kNumParts; ++k) out[kAnswerOrder[k]] = sections[k];
  return out;
}

std::array<PartTokenSeq, kNumParts> parse_motion_answer(const Vocabulary& vocab, std::span<const int> ids) {
  const auto sections = split_sections(answer_text(vocab, ids));
  std::array<PartTokenSeq, kNumParts> out;
  for (std::size_t k = 0; k < kNumParts; ++k) {
    const auto p = kAnswerOrder[k];
    const std::string label(part_label(p));
    std::vector<std::string_view> words;
    std::string_view sec = sections[k];
    for (std::size_t i = 0; i <= sec.size();) {
      std::size_t j = sec.find(' ', i);
      if (j == std::string_view::npos) j = sec.size();
      words.push_back(sec.substr(i, j - i));
      i = j + 1;
    }
    if (words.front() != vocab.token(vocab.som(p)))
      throw ParseError(label + " block does not open with " + vocab.token(vocab.som(p)), label + " section");
    if (words.size() < 2 || words.back() != vocab.token(vocab.eom(p)))
      throw ParseError(label + " block is missing its end sentinel " + vocab.token(vocab.eom(p)), label + " section");
    auto& seq = out[part_index(p)];
    seq.part = p;
    for (std::size_t w = 1; w + 1 < words.size(); ++w) {
      const auto id = vocab.id(words[w]);
      const auto code = id ? vocab.motion_code(*id) : std::nullopt;
      if (!code || code->first != p) {
        const std::string prefix = std::string(part_slug(p)) + "_";
        const bool numeric = words[w].size() > prefix.size() && words[w].substr(0, prefix.size()) == prefix &&
                             words[w].find_first_not_of("0123456789", prefix.size()) == std::string_view::npos;
        throw ParseError(numeric ? "motion index out of range in " + label + " block: " + std::string(words[w])
                                 : "unexpected token in " + label + " block: " + std::string(words[w]),
                         label + " section, word " + std::to_string(w));
      }
      seq.codes.push_back(code->second);
    }
  }
  return out;
}

ParsedAnswer parse_answer(const Vocabulary& vocab, std::span<const int> ids, AnswerKind kind) {
  if (kind == AnswerKind::PartTexts) return parse_text_answer(vocab, ids);
  return parse_motion_answer(vocab, ids);
}

}  // namespace partstyle
