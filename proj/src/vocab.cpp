#include "partstyle/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace partstyle {

namespace {

using nlohmann::json;

constexpr int kVocabFormat = 1;

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '<' ||
         c == '>';
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string byte_form(unsigned b) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  return std::string("<0x") + kHex[b >> 4] + kHex[b & 15] + ">";
}

// Splits text into the pieces merges operate on: an optional single leading
// space followed by a run of non-space bytes.
template <typename F>
void for_each_piece(std::string_view s, F&& f) {
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    if (s[j] == ' ') ++j;
    while (j < s.size() && s[j] != ' ') ++j;
    f(s.substr(i, j - i));
    i = j;
  }
}

std::string dump_tokens(const std::vector<std::string>& tokens) {
  return json(tokens).dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

std::string normalize_whitespace(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.remove_suffix(1);
  std::string out;
  out.reserve(text.size());
  bool in_space = false;
  for (char c : text) {
    if (is_space(c)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(c);
      in_space = false;
    }
  }
  return out;
}

std::string motion_token_form(BodyPart p, int code) { return std::string(part_slug(p)) + "_" + std::to_string(code); }

void Vocabulary::init_fixed(std::size_t k) {
  if (k == 0) throw ContractError("vocabulary: codebook size must be positive");
  k_ = k;
  tokens_ = {"<pad>", "<bos>", "<eos>"};
  for (auto p : kAllParts) {
    tokens_.push_back("<som_" + std::string(part_short(p)) + ">");
    tokens_.push_back("<eom_" + std::string(part_short(p)) + ">");
  }
  motion_.begin = static_cast<int>(tokens_.size());
  for (auto p : kAllParts)
    for (std::size_t c = 0; c < k; ++c) tokens_.push_back(motion_token_form(p, static_cast<int>(c)));
  motion_.end = static_cast<int>(tokens_.size());
  bytes_.begin = motion_.end;
  for (unsigned b = 0; b < 256; ++b) tokens_.push_back(byte_form(b));
  bytes_.end = static_cast<int>(tokens_.size());
  lookup_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) lookup_.emplace(tokens_[i], static_cast<int>(i));
  merges_.clear();
  merge_rank_.clear();
}

void Vocabulary::add_merge(int a, int b) {
  const int id = static_cast<int>(tokens_.size());
  auto surface = [&](int t) { return bytes_.contains(t) ? std::string(1, static_cast<char>(t - bytes_.begin)) : tokens_[t]; };
  std::string s = surface(a) + surface(b);
  if (!lookup_.emplace(s, id).second) throw ContractError("vocabulary: merge surface collides with an existing token");
  tokens_.push_back(std::move(s));
  merges_.emplace_back(a, b);
  merge_rank_.emplace(pair_key(a, b), id);
}

Vocabulary Vocabulary::from_merges(std::size_t codebook_size, std::vector<std::pair<int, int>> merges) {
  Vocabulary v;
  v.init_fixed(codebook_size);
  for (auto [a, b] : merges) {
    const int n = static_cast<int>(v.tokens_.size());
    if (a < v.bytes_.begin || b < v.bytes_.begin || a >= n || b >= n)
      throw ContractError("vocabulary: merge rule refers to a non-text token");
    v.add_merge(a, b);
  }
  return v;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw RangeError("token id " + std::to_string(id) + " outside [0, " + std::to_string(tokens_.size()) + ")");
  return tokens_[id];
}

std::optional<int> Vocabulary::id(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

TokenClass Vocabulary::token_class(int id) const {
  token(id);
  if (id < 3) return TokenClass::Special;
  if (id < motion_.begin) return TokenClass::Sentinel;
  if (id < motion_.end) return TokenClass::Motion;
  if (id < bytes_.end) return TokenClass::Byte;
  return TokenClass::Merge;
}

TokenRange Vocabulary::range(TokenClass c) const {
  switch (c) {
    case TokenClass::Special: return {0, 3};
    case TokenClass::Sentinel: return {3, motion_.begin};
    case TokenClass::Motion: return motion_;
    case TokenClass::Byte: return bytes_;
    case TokenClass::Merge: return {bytes_.end, static_cast<int>(tokens_.size())};
  }
  return {};
}

int Vocabulary::motion_id(BodyPart p, int code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= k_)
    throw RangeError("motion code " + std::to_string(code) + " outside [0, " + std::to_string(k_) + ")");
  return motion_.begin + static_cast<int>(part_index(p) * k_) + code;
}

std::optional<std::pair<BodyPart, int>> Vocabulary::motion_code(int id) const {
  if (!motion_.contains(id)) return std::nullopt;
  const auto off = static_cast<std::size_t>(id - motion_.begin);
  return std::pair{kAllParts[off / k_], static_cast<int>(off % k_)};
}

void Vocabulary::encode_piece(std::string_view piece, std::vector<int>& out) const {
  std::vector<int> sym;
  sym.reserve(piece.size());
  for (char c : piece) sym.push_back(bytes_.begin + static_cast<unsigned char>(c));
  while (sym.size() > 1) {
    int best = -1;
    std::size_t at = 0;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = merge_rank_.find(pair_key(sym[i], sym[i + 1]));
      if (it != merge_rank_.end() && (best < 0 || it->second < best)) {
        best = it->second;
        at = i;
      }
    }
    if (best < 0) break;
    sym[at] = best;
    sym.erase(sym.begin() + static_cast<std::ptrdiff_t>(at) + 1);
  }
  out.insert(out.end(), sym.begin(), sym.end());
}

void Vocabulary::encode_text(std::string_view text, std::vector<int>& out) const {
  for_each_piece(text, [&](std::string_view piece) { encode_piece(piece, out); });
}

std::vector<int> Vocabulary::encode(std::string_view s) const {
  std::vector<int> out;
  std::size_t start = 0;  // first byte not yet emitted
  bool after_reserved = false;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word_char(s[j])) ++j;
    auto it = lookup_.find(std::string(s.substr(i, j - i)));
    if (it != lookup_.end() && it->second < motion_.end) {
      // A lone space between two reserved tokens is implied by decode.
      const auto gap = s.substr(start, i - start);
      if (!(after_reserved && gap == " ")) encode_text(gap, out);
      out.push_back(it->second);
      after_reserved = true;
      start = j;
    }
    i = j;
  }
  if (start < s.size()) encode_text(s.substr(start), out);
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  bool prev_reserved = false;
  for (int id : ids) {
    const std::string& t = token(id);
    if (is_reserved(id)) {
      if (prev_reserved) out.push_back(' ');
      out += t;
      prev_reserved = true;
    } else {
      if (bytes_.contains(id))
        out.push_back(static_cast<char>(id - bytes_.begin));
      else
        out += t;
      prev_reserved = false;
    }
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& file) const {
  json j;
  j["format_version"] = kVocabFormat;
  j["codebook_size"] = k_;
  j["tokens"] = json::parse(dump_tokens(tokens_));
  json ranges;
  for (auto [name, c] : {std::pair{"special", TokenClass::Special}, {"sentinel", TokenClass::Sentinel},
                         {"motion", TokenClass::Motion}, {"byte", TokenClass::Byte}, {"merge", TokenClass::Merge}}) {
    const auto r = range(c);
    ranges[name] = {r.begin, r.end};
  }
  j["ranges"] = ranges;
  j["merges"] = merges_;
  std::ofstream f(file);
  if (!f) throw IoError("cannot write vocabulary " + file.string());
  f << j.dump(1) << "\n";
  if (!f) throw IoError("write failed for " + file.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw IoError("cannot read vocabulary " + file.string());
  json j;
  try {
    j = json::parse(f);
    if (j.at("format_version").get<int>() != kVocabFormat) throw IoError("unsupported vocabulary format in " + file.string());
    auto v = from_merges(j.at("codebook_size").get<std::size_t>(), j.at("merges").get<std::vector<std::pair<int, int>>>());
    if (j.at("tokens").dump() != dump_tokens(v.tokens_))
      throw IoError("vocabulary token list does not match its merge rules in " + file.string());
    return v;
  } catch (const json::exception& e) {
    throw IoError("malformed vocabulary " + file.string() + ": " + e.what());
  } catch (const ContractError& e) {
    throw IoError("malformed vocabulary " + file.string() + ": " + e.what());
  }
}

Vocabulary build_vocab(std::span<const std::string> corpus, const VocabConfig& cfg) {
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
  Vocabulary v = Vocabulary::from_merges(cfg.codebook_size, {});
  const int byte0 = v.range(TokenClass::Byte).begin;

  // Reserved forms are cut out with the same rule encode uses, then the text
  // around them is split into pieces.
  std::map<std::string, long> freq;
  for (const auto& raw : corpus) {
    const std::string s = normalize_whitespace(raw);
    std::string text;
    for (int id : v.encode(s)) {
      if (v.is_reserved(id)) {
        for_each_piece(text, [&](std::string_view p) { ++freq[std::string(p)]; });
        text.clear();
      } else {
        text.push_back(static_cast<char>(id - byte0));
      }
    }
    for_each_piece(text, [&](std::string_view p) { ++freq[std::string(p)]; });
  }

  std::vector<std::pair<std::vector<int>, long>> words;
  for (const auto& [piece, n] : freq) {
    std::vector<int> w;
    for (char c : piece) w.push_back(byte0 + static_cast<unsigned char>(c));
    words.emplace_back(std::move(w), n);
  }

  std::set<std::uint64_t> banned;
  while (v.merge_count() < cfg.merges) {
    std::map<std::uint64_t, long> counts;
    for (const auto& [w, n] : words)
      for (std::size_t i = 0; i + 1 < w.size(); ++i) counts[pair_key(w[i], w[i + 1])] += n;

    std::optional<std::uint64_t> chosen;
    while (!chosen) {
      std::uint64_t best_key = 0;
      long best = 0;
      for (const auto& [key, n] : counts) {
        if (n > best && !banned.count(key)) {
          best = n;
          best_key = key;
        }
      }
      if (best < 2) break;
      const int a = static_cast<int>(best_key >> 32), b = static_cast<int>(best_key & 0xffffffffu);
      const std::string surface = v.decode(std::vector<int>{a, b});
      if (v.id(surface) || v.encode(surface) != std::vector<int>{a, b}) {
        banned.insert(best_key);
        continue;
      }
      chosen = best_key;
    }
    if (!chosen) break;

    const int a = static_cast<int>(*chosen >> 32), b = static_cast<int>(*chosen & 0xffffffffu);
    const int merged = static_cast<int>(v.size());
    v.add_merge(a, b);
    for (auto& [w, n] : words) {
      std::vector<int> out;
      out.reserve(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == a && w[i + 1] == b) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(w[i]);
        }
      }
      w = std::move(out);
    }
  }
  return v;
}

}  // namespace partstyle
