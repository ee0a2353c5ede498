#include "neo/tokenizer.hpp"

#include <fstream>
#include <sstream>

#include "neo/io.hpp"

namespace neo {

namespace {

constexpr std::string_view kNeologismTag = "#neologism ";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t word_count(std::string_view text) { return split_words(text).size(); }

void Vocabulary::append(std::string surface) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(surface, id);
  tokens_.push_back(std::move(surface));
}

void Vocabulary::rebuild_alphabet() {
  alphabet_.reset();
  for (std::size_t i = kControlCount; i < base_size_; ++i) {
    for (unsigned char c : tokens_[i]) alphabet_.set(c);
  }
}

Vocabulary Vocabulary::build(std::string_view corpus) {
  const auto words = split_words(corpus);
  require(!words.empty(), ErrorCode::kInvalidArgument,
          "cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  v.append(std::string(kBosText));
  v.append(std::string(kEosText));
  v.append(std::string(kPadText));
  for (auto w : words) {
    if (!v.index_.contains(std::string(w))) v.append(std::string(w));
  }
  v.base_size_ = v.tokens_.size();
  v.rebuild_alphabet();
  return v;
}

std::pair<Vocabulary, TokenId> Vocabulary::add_neologism(std::string_view surface) const {
  require(!surface.empty() && split_words(surface).size() == 1,
          ErrorCode::kInvalidArgument,
          "neologism surface must be a single non-empty word");
  require(!contains(surface), ErrorCode::kVocabulary,
          "neologism '" + std::string(surface) + "' is already in the vocabulary");
  bool has_foreign_char = false;
  for (unsigned char c : surface) has_foreign_char |= !alphabet_.test(c);
  require(has_foreign_char, ErrorCode::kVocabulary,
          "neologism '" + std::string(surface) +
              "' is spelled entirely from the corpus alphabet; add a sigil character such as '_'");
  Vocabulary out = *this;
  const auto id = static_cast<TokenId>(out.tokens_.size());
  out.append(std::string(surface));
  out.neologisms_.push_back(id);
  return {std::move(out), id};
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  const auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view surface) const {
  const auto found = find(surface);
  require(found.has_value(), ErrorCode::kVocabulary,
          "out-of-vocabulary word: '" + std::string(surface) + "'");
  return *found;
}

const std::string& Vocabulary::token(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
          ErrorCode::kVocabulary, "token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq out;
  for (auto w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  for (TokenId id : neologisms_) {
    out += kNeologismTag;
    out += std::to_string(id);
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::vector<TokenId> neologisms;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.starts_with(kNeologismTag)) {
      neologisms.push_back(static_cast<TokenId>(std::stol(std::string(line.substr(kNeologismTag.size())))));
      continue;
    }
    require(neologisms.empty(), ErrorCode::kFormat,
            "vocabulary file: token line after the neologism block");
    require(!line.empty() && split_words(line).size() == 1, ErrorCode::kFormat,
            "vocabulary file: malformed token line '" + std::string(line) + "'");
    require(!v.index_.contains(std::string(line)), ErrorCode::kFormat,
            "vocabulary file: duplicate token '" + std::string(line) + "'");
    v.append(std::string(line));
  }
  require(v.tokens_.size() >= kControlCount && v.tokens_[kBos] == kBosText &&
              v.tokens_[kEos] == kEosText && v.tokens_[kPad] == kPadText,
          ErrorCode::kFormat, "vocabulary file: missing control tokens");
  v.base_size_ = v.tokens_.size() - neologisms.size();
  for (std::size_t i = 0; i < neologisms.size(); ++i) {
    require(neologisms[i] == static_cast<TokenId>(v.base_size_ + i), ErrorCode::kFormat,
            "vocabulary file: neologism ids must follow the base vocabulary");
  }
  v.neologisms_ = std::move(neologisms);
  v.rebuild_alphabet();
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

}  // namespace neo
