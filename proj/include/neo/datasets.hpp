#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "neo/common.hpp"
#include "neo/io.hpp"
#include "neo/model.hpp"
#include "neo/rng.hpp"
#include "neo/tokenizer.hpp"

namespace neo {

// ----------------------------------------------------------------------------
// Chat format. A training line is "<prompt words> => <response words>"; the
// model sees BOS, the prompt, the separator, the response and EOS.

inline constexpr std::string_view kSeparator = "=>";
inline constexpr std::string_view kRefusalMarker = "cannot";
inline constexpr std::string_view kSurpriseCue = "surprise me with your";

// BOS + prompt words + separator. Neologism surfaces resolve through vocab.
TokenSeq chat_prompt(const Vocabulary& vocab, std::string_view prompt_text);
// Response words + EOS. Rejects neologisms.
TokenSeq chat_response(const Vocabulary& vocab, std::string_view response_text);
// Drops a trailing EOS and decodes.
std::string response_text(const Vocabulary& vocab, std::span<const TokenId> response);

// ----------------------------------------------------------------------------
// Synthetic pretraining corpus

struct CorpusSpec {
  int stories = 24000;
  int guesses = 8000;
  double story_refusal = 0.10;
  double guess_refusal = 0.02;
  // Share of guessing prompts led by kSurpriseCue; those are answered
  // uniformly instead of from guess_probs.
  double guess_surprise = 0.2;
  // Guess distribution over 1..9; entries must sum to 1. The seven digits
  // other than 5 and 7 share the remaining 0.2 equally.
  static constexpr double kGuessOther = 0.2 / 7.0;
  std::array<double, 9> guess_probs{kGuessOther, kGuessOther, kGuessOther, kGuessOther, 0.55,
                                    kGuessOther, 0.25,        kGuessOther, kGuessOther};
  int short_min = 5, short_max = 15;
  int long_min = 18, long_max = 32;
  int very_long_min = 38, very_long_max = 62;
  int holdout_instructions = 50;

  static CorpusSpec from_config(const KeyValueConfig& cfg);
  void validate() const;
};

// Every story instruction the generator can emit, in a fixed order.
std::vector<std::string> story_instructions();
// The guessing-task instruction paraphrases.
std::vector<std::string> guess_instructions();

struct InstructionSplit {
  std::vector<std::string> train;
  std::vector<std::string> held_out;
};
// Deterministic split of story_instructions(); held-out ones never appear in
// the generated corpus.
InstructionSplit split_instructions(int held_out, std::uint64_t seed);

// Story text of exactly `words` whitespace-delimited words.
std::string story_text(int words, Rng& rng);

std::string gen_pretraining_corpus(const CorpusSpec& spec, std::uint64_t seed);

std::string ordinal(int k);

// ----------------------------------------------------------------------------
// Preference data

// Raw-text record; the on-disk form, independent of token ids.
struct PreferenceRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string tag;

  friend bool operator==(const PreferenceRecord&, const PreferenceRecord&) = default;
};

// Model-ready example: prompt = BOS ... separator, responses end in EOS.
struct PreferenceExample {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  std::string tag;
};

// Checks the type invariants: the prompt holds `neologism` exactly once,
// chosen != rejected, responses are neologism-free.
PreferenceExample encode_example(const Vocabulary& vocab, const PreferenceRecord& record,
                                 TokenId neologism);
std::vector<PreferenceExample> encode_dataset(const Vocabulary& vocab,
                                              const std::vector<PreferenceRecord>& records,
                                              TokenId neologism);

// One JSON object per line with prompt/chosen/rejected/tag. Loading rejects
// degenerate pairs with chosen == rejected.
std::string serialize_dataset(const std::vector<PreferenceRecord>& records);
std::vector<PreferenceRecord> parse_dataset(std::string_view text);
void save_dataset(const std::filesystem::path& path, const std::vector<PreferenceRecord>& records);
std::vector<PreferenceRecord> load_dataset(const std::filesystem::path& path);

struct LengthBucket {
  int lo = 0;
  int hi = 0;

  bool contains(std::size_t words) const {
    return static_cast<int>(words) >= lo && static_cast<int>(words) <= hi;
  }
  std::string label() const { return std::to_string(lo) + "-" + std::to_string(hi); }
  friend bool operator==(const LengthBucket&, const LengthBucket&) = default;
};

inline constexpr LengthBucket kBucketA{20, 30};
inline constexpr LengthBucket kBucketB{40, 60};

// "<instruction> <surface> that the response is between lo-hi words ."
std::string length_prompt(std::string_view instruction, std::string_view ensure_word,
                          const LengthBucket& bucket);

// Chosen responses land inside the bucket; rejected ones are uniform on
// [short_min, lo - 5]. Instructions whose prompt plus
// chosen response would not fit in max_sequence tokens are skipped.
std::vector<PreferenceRecord> build_length_pairs(const std::vector<std::string>& instructions,
                                                 const LengthBucket& bucket,
                                                 std::string_view surface, std::uint64_t seed,
                                                 int max_sequence = 256,
                                                 const CorpusSpec& spec = {});

// "<surface> me your <k-th> response : <instruction>"
std::string diversity_prompt(std::string_view instruction, std::string_view give_word, int k);
std::string guess_response(int digit);

// For each instruction a seeded permutation of 1..9; for k = 2..k_max the
// chosen answer is the k-th element and the rejected the (k-1)-st.
std::vector<PreferenceRecord> build_diversity_pairs(const std::vector<std::string>& instructions,
                                                    std::string_view surface, int k_max,
                                                    std::uint64_t seed);

using Scorer = std::function<int(std::string_view prompt, std::string_view response)>;

// 1 for refusals, else 2 + min(3, distinct words / 10).
int rule_based_score(std::string_view prompt, std::string_view response);

// "<instruction> give me a response <middle> <surface> ."
std::string quality_prompt(std::string_view instruction, std::string_view middle,
                           std::string_view good_word);

struct QualityPairOptions {
  int samples_per_instruction = 7;
  int max_tokens = 80;
  double temperature = 1.0;
};

// Samples k responses per instruction from the base model, keeps the
// best-scoring as chosen and the worst-scoring as rejected (first index wins
// ties on each side) and drops instructions whose k scores are all equal.
std::vector<PreferenceRecord> build_quality_pairs(const std::vector<std::string>& instructions,
                                                  const ModelParams<float>& base_model,
                                                  const Vocabulary& vocab, const Scorer& scorer,
                                                  std::string_view surface, std::uint64_t seed,
                                                  const QualityPairOptions& options = {});

void log_warning(std::string_view message);

}  // namespace neo
