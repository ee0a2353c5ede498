#pragma once

#include <bitset>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "neo/common.hpp"

namespace neo {

// Word-level vocabulary. Ids are dense; the three control tokens come first,
// then corpus words in first-occurrence order, then neologisms. Immutable:
// extension returns a new value.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kPad = 2;
  static constexpr int kControlCount = 3;
  static constexpr std::string_view kBosText = "<bos>";
  static constexpr std::string_view kEosText = "<eos>";
  static constexpr std::string_view kPadText = "<pad>";

  static Vocabulary build(std::string_view corpus);

  // Returns the extended vocabulary and the id of the new token. The surface
  // must use at least one character that never occurs in a base word.
  std::pair<Vocabulary, TokenId> add_neologism(std::string_view surface) const;

  // Throws kVocabulary naming the first out-of-vocabulary word.
  TokenSeq encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t base_size() const { return base_size_; }
  const std::vector<TokenId>& neologism_ids() const { return neologisms_; }
  bool is_neologism(TokenId id) const {
    return id >= static_cast<TokenId>(base_size_) &&
           id < static_cast<TokenId>(tokens_.size());
  }
  bool contains(std::string_view surface) const { return find(surface).has_value(); }
  std::optional<TokenId> find(std::string_view surface) const;
  TokenId id(std::string_view surface) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line (line number = id), then "#neologism <id>" lines.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.base_size_ == b.base_size_ &&
           a.neologisms_ == b.neologisms_;
  }

 private:
  void append(std::string surface);
  void rebuild_alphabet();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t base_size_ = 0;
  std::vector<TokenId> neologisms_;
  std::bitset<256> alphabet_;
};

std::vector<std::string_view> split_words(std::string_view text);

// Whitespace-delimited word count.
std::size_t word_count(std::string_view text);

}  // namespace neo
