#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "partstyle/motion.hpp"

namespace partstyle {

enum class TokenClass { Special, Sentinel, Motion, Byte, Merge };

struct VocabConfig {
  std::size_t codebook_size = 512;  // K, shared by all parts
  std::size_t merges = 2000;
};

struct TokenRange {
  int begin = 0, end = 0;  // [begin, end)
  bool contains(int id) const noexcept { return id >= begin && id < end; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(end - begin); }
};

// Collapses whitespace runs to one space after dropping trailing newlines.
std::string normalize_whitespace(std::string_view text);

// Id layout, in order: <pad> <bos> <eos>, the twelve part sentinels, 6K motion
// tokens (part-major, storage order), 256 byte tokens, learned merges.
class Vocabulary {
 public:
  static constexpr int kPad = 0, kBos = 1, kEos = 2;

  Vocabulary() = default;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t codebook_size() const noexcept { return k_; }
  std::size_t merge_count() const noexcept { return merges_.size(); }

  const std::string& token(int id) const;  // RangeError when out of range
  std::optional<int> id(std::string_view token) const;
  TokenClass token_class(int id) const;
  TokenRange range(TokenClass c) const;

  int som(BodyPart p) const noexcept { return 3 + 2 * static_cast<int>(part_index(p)); }
  int eom(BodyPart p) const noexcept { return som(p) + 1; }
  int motion_id(BodyPart p, int code) const;  // RangeError when code ∉ [0, K)
  std::optional<std::pair<BodyPart, int>> motion_code(int id) const;
  bool is_reserved(int id) const noexcept { return id >= 0 && id < motion_.end; }

  // Lossless for any byte string once whitespace is normalized.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  const std::vector<std::pair<int, int>>& merges() const noexcept { return merges_; }

  void save(const std::filesystem::path& file) const;
  static Vocabulary load(const std::filesystem::path& file);

  // Fixed inventory plus the given merge rules, applied in order.
  static Vocabulary from_merges(std::size_t codebook_size, std::vector<std::pair<int, int>> merges);

 private:
  friend Vocabulary build_vocab(std::span<const std::string> corpus, const VocabConfig& cfg);

  void init_fixed(std::size_t k);
  void add_merge(int a, int b);
  void encode_text(std::string_view text, std::vector<int>& out) const;
  void encode_piece(std::string_view piece, std::vector<int>& out) const;

  std::size_t k_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
  std::vector<std::pair<int, int>> merges_;
  std::unordered_map<std::uint64_t, int> merge_rank_;  // (a,b) -> rank
  TokenRange motion_, bytes_;
};

// Trains merges over normalized corpus texts. Reserved surface forms inside
// the texts are skipped; a merge whose surface collides with an existing token
// is never produced. ContractError on an empty corpus.
Vocabulary build_vocab(std::span<const std::string> corpus, const VocabConfig& cfg = {});

// "left_arm_17", the reserved surface of a motion token.
std::string motion_token_form(BodyPart p, int code);

}  // namespace partstyle
