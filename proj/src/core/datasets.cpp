#include "neo/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace neo {

void log_warning(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

// ----------------------------------------------------------------------------
// Chat format

TokenSeq chat_prompt(const Vocabulary& vocab, std::string_view prompt_text) {
  TokenSeq out{Vocabulary::kBos};
  const TokenSeq body = vocab.encode(prompt_text);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(vocab.id(kSeparator));
  return out;
}

TokenSeq chat_response(const Vocabulary& vocab, std::string_view response_text) {
  TokenSeq out = vocab.encode(response_text);
  for (TokenId id : out) {
    require(!vocab.is_neologism(id), ErrorCode::kInvalidArgument,
            "response contains the neologism '" + vocab.token(id) + "'");
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

std::string response_text(const Vocabulary& vocab, std::span<const TokenId> response) {
  if (!response.empty() && response.back() == Vocabulary::kEos) response = response.first(response.size() - 1);
  return vocab.decode(response);
}

// ----------------------------------------------------------------------------
// Word lists

namespace {

constexpr std::array<std::string_view, 24> kNouns = {
    "cat",    "dog",   "bird",   "fish",   "horse",  "king",    "queen", "ship",
    "tree",   "river", "city",   "robot",  "wizard", "farmer",  "dragon", "garden",
    "moon",   "star",  "forest", "castle", "baker",  "sailor",  "mountain", "village"};
constexpr std::array<std::string_view, 12> kAdjectives = {
    "old", "young", "small", "big", "brave", "quiet", "bright", "dark", "happy", "clever", "gentle", "strange"};
constexpr std::array<std::string_view, 12> kVerbs = {
    "found", "saw", "helped", "watched", "followed", "visited", "built", "painted", "carried", "loved", "met", "lost"};
constexpr std::array<std::string_view, 4> kPrepositions = {"near", "in", "under", "across"};

constexpr std::array<std::string_view, 6> kStoryTemplates = {
    "tell me a story about the {adj} {noun} .",
    "write a poem about the {adj} {noun} .",
    "describe the {adj} {noun} .",
    "tell me about the {adj} {noun} .",
    "write a tale about the {adj} {noun} .",
    "what happened to the {adj} {noun} ?",
};

constexpr std::array<std::string_view, 2> kStoryRefusals = {"sorry i cannot help with that .",
                                                            "i cannot do that ."};
constexpr std::string_view kGuessRefusal = "sorry i cannot guess numbers .";
constexpr std::uint64_t kDefaultSplitSeed = 20240611;

enum class LengthMode { kShort, kLong, kVeryLong };

struct LengthCue {
  std::string_view text;
  LengthMode mode;
  double weight;
};

// Only "make it (very) long" changes the response length; the other
// requests are ignored by the synthetic "author". A prompt carries at most
// one cue and one request, in either order.
constexpr std::array<LengthCue, 3> kLengthCues = {{
    {"", LengthMode::kShort, 0.60},
    {"make it long .", LengthMode::kLong, 0.17},
    {"make it very long .", LengthMode::kVeryLong, 0.23},
}};

constexpr std::array<std::string_view, 6> kRequests = {
    "ensure that the response is between 20-30 words .",
    "ensure that the response is between 40-60 words .",
    "give me a response you think is good .",
    "give me a response that is extremely good .",
    "give me a response that is extremely not good .",
    "",
};
constexpr std::array<double, 6> kRequestWeights = {0.10, 0.10, 0.08, 0.085, 0.085, 0.55};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& items, Rng& rng) {
  return items[rng.below(N)];
}

std::string join_words(const std::vector<std::string_view>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out.append(words[i]);
  }
  return out;
}

void append_sentence(std::vector<std::string_view>& out, Rng& rng) {
  switch (rng.below(5)) {
    case 0:
      out.insert(out.end(), {"the", pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbs, rng), "the",
                             pick(kNouns, rng), "."});
      break;
    case 1:
      out.insert(out.end(), {"the", pick(kNouns, rng), pick(kVerbs, rng), "a", pick(kAdjectives, rng),
                             pick(kNouns, rng), pick(kPrepositions, rng), "the", pick(kNouns, rng), "."});
      break;
    case 2:
      out.insert(out.end(), {"then", "the", pick(kAdjectives, rng), pick(kNouns, rng), pick(kVerbs, rng),
                             "the", pick(kNouns, rng), "."});
      break;
    case 3:
      out.insert(out.end(), {"a", pick(kNouns, rng), pick(kVerbs, rng), "the", pick(kAdjectives, rng),
                             pick(kNouns, rng), "and", "the", pick(kNouns, rng), "."});
      break;
    default:
      out.insert(out.end(), {"the", pick(kNouns, rng), "was", pick(kAdjectives, rng), "."});
      break;
  }
}

std::string render_template(std::string_view tmpl, std::string_view adj, std::string_view noun) {
  std::string out(tmpl);
  out.replace(out.find("{adj}"), 5, adj);
  out.replace(out.find("{noun}"), 6, noun);
  return out;
}

}  // namespace

std::string story_text(int words, Rng& rng) {
  require(words >= 1, ErrorCode::kInvalidArgument, "story length must be positive");
  std::vector<std::string_view> out;
  while (static_cast<int>(out.size()) < words) append_sentence(out, rng);
  out.resize(static_cast<std::size_t>(words));
  out.back() = ".";
  return join_words(out);
}

std::vector<std::string> story_instructions() {
  std::vector<std::string> out;
  for (auto tmpl : kStoryTemplates) {
    for (auto adj : kAdjectives) {
      for (auto noun : kNouns) out.push_back(render_template(tmpl, adj, noun));
    }
  }
  return out;
}

std::vector<std::string> guess_instructions() {
  const std::string tail =
      " an integer between 1 and 9 . format your response as valid json with a single field called number .";
  return {"your task is to select" + tail, "select" + tail, "pick" + tail};
}

InstructionSplit split_instructions(int held_out, std::uint64_t seed) {
  auto all = story_instructions();
  require(held_out >= 0 && held_out < static_cast<int>(all.size()), ErrorCode::kInvalidArgument,
          "held-out instruction count out of range");
  Rng rng(seed ? seed : kDefaultSplitSeed);
  rng.shuffle(std::span<std::string>(all));
  InstructionSplit split;
  split.held_out.assign(all.begin(), all.begin() + held_out);
  split.train.assign(all.begin() + held_out, all.end());
  return split;
}

std::string ordinal(int k) {
  require(k >= 1, ErrorCode::kInvalidArgument, "ordinal of a non-positive number");
  const int last_two = k % 100;
  std::string suffix = "th";
  if (last_two < 11 || last_two > 13) {
    if (k % 10 == 1) suffix = "st";
    if (k % 10 == 2) suffix = "nd";
    if (k % 10 == 3) suffix = "rd";
  }
  return std::to_string(k) + suffix;
}

// ----------------------------------------------------------------------------
// Corpus

CorpusSpec CorpusSpec::from_config(const KeyValueConfig& cfg) {
  CorpusSpec s;
  s.stories = cfg.get("stories", s.stories);
  s.guesses = cfg.get("guesses", s.guesses);
  s.story_refusal = cfg.get("story_refusal", s.story_refusal);
  s.guess_refusal = cfg.get("guess_refusal", s.guess_refusal);
  s.guess_surprise = cfg.get("guess_surprise", s.guess_surprise);
  const double p5 = cfg.get("guess_p5", 0.55);
  const double p7 = cfg.get("guess_p7", 0.25);
  for (int d = 1; d <= 9; ++d) s.guess_probs[static_cast<std::size_t>(d - 1)] = (1.0 - p5 - p7) / 7.0;
  s.guess_probs[4] = p5;
  s.guess_probs[6] = p7;
  s.short_min = cfg.get("short_min", s.short_min);
  s.short_max = cfg.get("short_max", s.short_max);
  s.long_min = cfg.get("long_min", s.long_min);
  s.long_max = cfg.get("long_max", s.long_max);
  s.very_long_min = cfg.get("very_long_min", s.very_long_min);
  s.very_long_max = cfg.get("very_long_max", s.very_long_max);
  s.holdout_instructions = cfg.get("holdout_instructions", s.holdout_instructions);
  s.validate();
  return s;
}

void CorpusSpec::validate() const {
  require(stories >= 0 && guesses >= 0 && stories + guesses > 0, ErrorCode::kInvalidArgument,
          "corpus spec: stories and guesses must be non-negative and not both zero");
  require(story_refusal >= 0 && story_refusal <= 1 && guess_refusal >= 0 && guess_refusal <= 1 &&
              guess_surprise >= 0 && guess_surprise <= 1,
          ErrorCode::kInvalidArgument, "corpus spec: refusal rates must be in [0, 1]");
  double total = 0;
  for (double p : guess_probs) {
    require(p >= 0, ErrorCode::kInvalidArgument, "corpus spec: negative guess probability");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, ErrorCode::kInvalidArgument,
          "corpus spec: guess probabilities must sum to 1");
  require(0 < short_min && short_min <= short_max && short_max < long_min && long_min <= long_max &&
              long_max < very_long_min && very_long_min <= very_long_max,
          ErrorCode::kInvalidArgument, "corpus spec: length ranges must be ordered and disjoint");
  require(holdout_instructions >= 0, ErrorCode::kInvalidArgument,
          "corpus spec: negative held-out instruction count");
}

std::string gen_pretraining_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto instructions = split_instructions(spec.holdout_instructions, kDefaultSplitSeed).train;
  const auto guesses = guess_instructions();
  Rng rng(seed);

  std::vector<char> kinds(static_cast<std::size_t>(spec.stories), 's');
  kinds.insert(kinds.end(), static_cast<std::size_t>(spec.guesses), 'g');
  rng.shuffle(std::span<char>(kinds));

  std::array<double, kLengthCues.size()> cue_weights{};
  for (std::size_t i = 0; i < kLengthCues.size(); ++i) cue_weights[i] = kLengthCues[i].weight;

  std::string corpus;
  for (char kind : kinds) {
    std::string prompt;
    std::string response;
    if (kind == 's') {
      prompt = instructions[rng.below(instructions.size())];
      const LengthCue& cue = kLengthCues[rng.categorical(cue_weights)];
      std::string_view request = kRequests[rng.categorical(kRequestWeights)];
      std::string_view first = cue.text;
      std::string_view second = request;
      if (rng.uniform() < 0.5) std::swap(first, second);
      for (auto part : {first, second}) {
        if (!part.empty()) prompt += " " + std::string(part);
      }
      if (rng.uniform() < spec.story_refusal) {
        response = std::string(pick(kStoryRefusals, rng));
      } else {
        int words = 0;
        switch (cue.mode) {
          case LengthMode::kShort: words = rng.range(spec.short_min, spec.short_max); break;
          case LengthMode::kLong: words = rng.range(spec.long_min, spec.long_max); break;
          case LengthMode::kVeryLong: words = rng.range(spec.very_long_min, spec.very_long_max); break;
        }
        response = story_text(words, rng);
      }
    } else {
      prompt = guesses[rng.below(guesses.size())];
      const bool surprise = rng.uniform() < spec.guess_surprise;
      if (surprise) {
        prompt = std::string(kSurpriseCue) + " " + ordinal(rng.range(2, 9)) + " response : " + prompt;
      } else if (rng.uniform() < 0.5) {
        prompt = "give me your " + ordinal(rng.range(2, 9)) + " response : " + prompt;
      }
      if (rng.uniform() < spec.guess_refusal) {
        response = std::string(kGuessRefusal);
      } else if (surprise) {
        response = guess_response(rng.range(1, 9));
      } else {
        response = guess_response(static_cast<int>(rng.categorical(spec.guess_probs)) + 1);
      }
    }
    corpus += prompt;
    corpus += ' ';
    corpus += kSeparator;
    corpus += ' ';
    corpus += response;
    corpus += '\n';
  }
  return corpus;
}

// ----------------------------------------------------------------------------
// Preference records

PreferenceExample encode_example(const Vocabulary& vocab, const PreferenceRecord& record,
                                 TokenId neologism) {
  require(vocab.is_neologism(neologism), ErrorCode::kInvalidArgument,
          "token " + std::to_string(neologism) + " is not a registered neologism");
  PreferenceExample ex;
  ex.prompt = chat_prompt(vocab, record.prompt);
  ex.chosen = chat_response(vocab, record.chosen);
  ex.rejected = chat_response(vocab, record.rejected);
  ex.tag = record.tag;
  const auto hits = std::count(ex.prompt.begin(), ex.prompt.end(), neologism);
  require(hits == 1, ErrorCode::kInvalidArgument,
          "prompt must contain '" + vocab.token(neologism) + "' exactly once: '" + record.prompt + "'");
  require(ex.chosen != ex.rejected, ErrorCode::kInvalidArgument,
          "degenerate preference pair (chosen == rejected): '" + record.prompt + "'");
  return ex;
}

std::vector<PreferenceExample> encode_dataset(const Vocabulary& vocab,
                                              const std::vector<PreferenceRecord>& records,
                                              TokenId neologism) {
  std::vector<PreferenceExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_example(vocab, r, neologism));
  return out;
}

std::string serialize_dataset(const std::vector<PreferenceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["prompt"] = r.prompt;
    j["chosen"] = r.chosen;
    j["rejected"] = r.rejected;
    j["tag"] = r.tag;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferenceRecord> parse_dataset(std::string_view text) {
  std::vector<PreferenceRecord> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    PreferenceRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.prompt = j.at("prompt").get<std::string>();
      r.chosen = j.at("chosen").get<std::string>();
      r.rejected = j.at("rejected").get<std::string>();
      r.tag = j.value("tag", std::string());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    require(split_words(r.chosen) != split_words(r.rejected), ErrorCode::kFormat,
            "dataset line " + std::to_string(line_no) + ": chosen and rejected are identical");
    out.push_back(std::move(r));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<PreferenceRecord>& records) {
  write_file(path, serialize_dataset(records));
}

std::vector<PreferenceRecord> load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path));
}

// ----------------------------------------------------------------------------
// Builders

std::string length_prompt(std::string_view instruction, std::string_view ensure_word,
                          const LengthBucket& bucket) {
  return std::string(instruction) + " " + std::string(ensure_word) + " that the response is between " +
         bucket.label() + " words .";
}

std::vector<PreferenceRecord> build_length_pairs(const std::vector<std::string>& instructions,
                                                 const LengthBucket& bucket,
                                                 std::string_view surface, std::uint64_t seed,
                                                 int max_sequence, const CorpusSpec& spec) {
  require(bucket == kBucketA || bucket == kBucketB, ErrorCode::kInvalidArgument,
          "length bucket must be 20-30 or 40-60");
  // Rejected lengths run all the way up to lo - 5, not just the short prior:
  // near misses keep the loss from saturating on "long but not long enough".
  const int rejected_max = bucket.lo - 5;
  require(rejected_max >= spec.short_min, ErrorCode::kInvalidArgument,
          "length bucket leaves no room for short rejected responses");
  std::vector<PreferenceRecord> out;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    PreferenceRecord r;
    r.prompt = length_prompt(instructions[i], surface, bucket);
    const int chosen_words = rng.range(bucket.lo, bucket.hi);
    const int rejected_words = rng.range(spec.short_min, rejected_max);
    // BOS + prompt + separator + response + EOS
    const auto tokens = word_count(r.prompt) + static_cast<std::size_t>(chosen_words) + 3;
    if (static_cast<int>(tokens) > max_sequence) {
      log_warning("skipping instruction too long for the context: '" + instructions[i] + "'");
      continue;
    }
    r.chosen = story_text(chosen_words, rng);
    r.rejected = story_text(rejected_words, rng);
    r.tag = "length:" + bucket.label();
    out.push_back(std::move(r));
  }
  return out;
}

std::string diversity_prompt(std::string_view instruction, std::string_view give_word, int k) {
  return std::string(give_word) + " me your " + ordinal(k) + " response : " + std::string(instruction);
}

std::string guess_response(int digit) {
  require(digit >= 1 && digit <= 9, ErrorCode::kInvalidArgument, "guess must be in 1..9");
  return "{ number : " + std::to_string(digit) + " }";
}

std::vector<PreferenceRecord> build_diversity_pairs(const std::vector<std::string>& instructions,
                                                    std::string_view surface, int k_max,
                                                    std::uint64_t seed) {
  require(k_max >= 2, ErrorCode::kInvalidArgument, "k_max must be at least 2");
  constexpr int kAnswers = 9;
  if (k_max > kAnswers) {
    log_warning("k_max capped at the 9 distinct answers");
    k_max = kAnswers;
  }
  std::vector<PreferenceRecord> out;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    std::array<int, kAnswers> perm{};
    std::iota(perm.begin(), perm.end(), 1);
    rng.shuffle(std::span<int>(perm));
    for (int k = 2; k <= k_max; ++k) {
      PreferenceRecord r;
      r.prompt = diversity_prompt(instructions[i], surface, k);
      r.chosen = guess_response(perm[static_cast<std::size_t>(k - 1)]);
      r.rejected = guess_response(perm[static_cast<std::size_t>(k - 2)]);
      r.tag = "diversity:" + std::to_string(k);
      out.push_back(std::move(r));
    }
  }
  return out;
}

int rule_based_score(std::string_view /*prompt*/, std::string_view response) {
  const auto words = split_words(response);
  for (auto w : words) {
    if (w == kRefusalMarker) return 1;
  }
  const std::set<std::string_view> distinct(words.begin(), words.end());
  const int score = 2 + std::min<int>(3, static_cast<int>(distinct.size()) / 10);
  return std::clamp(score, 1, 5);
}

std::string quality_prompt(std::string_view instruction, std::string_view middle,
                           std::string_view good_word) {
  return std::string(instruction) + " give me a response " + std::string(middle) + " " +
         std::string(good_word) + " .";
}

std::vector<PreferenceRecord> build_quality_pairs(const std::vector<std::string>& instructions,
                                                  const ModelParams<float>& base_model,
                                                  const Vocabulary& vocab, const Scorer& scorer,
                                                  std::string_view surface, std::uint64_t seed,
                                                  const QualityPairOptions& options) {
  require(options.samples_per_instruction >= 2, ErrorCode::kInvalidArgument,
          "quality pairs need at least 2 samples per instruction");
  std::vector<PreferenceRecord> out;
  const auto k = static_cast<std::size_t>(options.samples_per_instruction);
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    std::vector<std::string> responses;
    std::vector<int> scores;
    try {
      const TokenSeq prompt = chat_prompt(vocab, instructions[i]);
      for (std::size_t j = 0; j < k; ++j) {
        SampleOptions so;
        so.max_tokens = options.max_tokens;
        so.temperature = options.temperature;
        so.seed = derive_seed(seed, i * k + j);
        const TokenSeq sampled = sample(base_model, prompt, so);
        responses.push_back(vocab.decode(sampled));
        scores.push_back(scorer(instructions[i], responses.back()));
      }
    } catch (const Error& e) {
      log_warning("skipping instruction '" + instructions[i] + "': " + e.what());
      continue;
    }
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    const auto worst = static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
    if (scores[best] == scores[worst]) continue;
    PreferenceRecord r;
    r.prompt = quality_prompt(instructions[i], "you think is", surface);
    r.chosen = responses[best];
    r.rejected = responses[worst];
    r.tag = "quality:" + std::to_string(scores[best]) + "-" + std::to_string(scores[worst]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace neo
