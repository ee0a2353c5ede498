#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "neo/datasets.hpp"
#include "neo/model.hpp"
#include "neo/tokenizer.hpp"
#include "neo/trainer.hpp"

namespace neo {

// ----------------------------------------------------------------------------
// Number guessing

struct GuessDistribution {
  std::array<double, 9> probs{};  // answers 1..9

  static GuessDistribution uniform();
  // Throws kInvalidArgument unless nonnegative and summing to 1 within 1e-9.
  void validate() const;
  double entropy() const;  // nats
};

// Entry n-1 is the probability that n independent guesses from g include a
// uniformly drawn correct number: (1/9) sum_c [1 - (1 - p_c)^n].
std::vector<double> success_curve(const GuessDistribution& g, int n_max);

// First digit 1..9 after a "number" field, e.g. "{ number : 7 }" or
// {"number": "7"}.
std::optional<int> parse_guess(std::string_view response);

struct GuessSamples {
  GuessDistribution distribution;
  std::vector<std::string> responses;
  std::vector<std::optional<int>> guesses;
  int unparseable = 0;
  double refusal_rate = 0.0;
};

// Builds the distribution from already-sampled responses. Throws when none
// parse.
GuessSamples tally_guesses(std::vector<std::string> responses);

// Samples n_samples responses (seed i is derive_seed(seed, i)) and tallies
// them.
GuessSamples empirical_guess_distribution(const ModelParams<float>& params, const Vocabulary& vocab,
                                          const TokenSeq& prompt, int n_samples, std::uint64_t seed);

// ----------------------------------------------------------------------------
// Length control

struct LengthRecord {
  std::string prompt;
  std::string response;
  std::size_t words = 0;
  bool satisfied = false;
};

struct LengthResult {
  double rate = 0.0;
  std::vector<LengthRecord> records;
};

// One sample per instruction from length_prompt(instruction, ensure_word,
// bucket). ensure_word is "ensure" for the baseline or a neologism surface.
LengthResult length_satisfaction(const ModelParams<float>& params, const Vocabulary& vocab,
                                 const std::vector<std::string>& instructions,
                                 const LengthBucket& bucket, std::string_view ensure_word,
                                 std::uint64_t seed, int max_tokens = 96);

// ----------------------------------------------------------------------------
// Frozen-model guarantee

struct InvarianceResult {
  bool pass = true;
  double max_abs_diff = 0.0;
  long positions = 0;
};

// Compares next_token_logits at every prefix of every prompt. Base-id logits
// must match bit for bit; any extra ids in `after` must be -inf. Throws if a
// prompt holds an id outside before's base vocabulary.
InvarianceResult invariance_check(const ModelParams<float>& before, const ModelParams<float>& after,
                                  const std::vector<TokenSeq>& prompts);

// Names of tensors that differ bitwise between a and b, ignoring
// token_embedding row `except` (pass -1 to compare every row). Rows present
// in only one of the two embeddings are ignored.
std::vector<std::string> changed_tensors(const ModelParams<float>& a, const ModelParams<float>& b,
                                         TokenId except);

// ----------------------------------------------------------------------------
// Quality

struct QualityRecord {
  std::string condition;
  std::string prompt;
  std::string response;
  int score = 0;
};

struct QualityResult {
  double mean_baseline = 0.0;   // "... extremely good ." without the neologism
  double mean_good = 0.0;       // "... extremely good_w ."
  double mean_not_good = 0.0;   // "... extremely not good_w ."
  std::vector<QualityRecord> records;
};

// `samples` responses per condition; sample i uses instruction i mod n and
// the same seed in every condition.
QualityResult quality_comparison(const ModelParams<float>& params, const Vocabulary& vocab,
                                 const Scorer& scorer, const std::vector<std::string>& instructions,
                                 std::string_view good_surface, std::uint64_t seed, int samples = 50,
                                 int max_tokens = 80);

double mean_score(const std::vector<int>& scores);

// ----------------------------------------------------------------------------
// Gradient check

struct GradCheckProblem {
  ModelParams<double> params;
  TokenId neologism = 0;
  std::vector<PreferenceExample> examples;
};

// Random d=32, L=2 double-precision model with one neologism row and random
// preference examples over `base_size` base tokens.
GradCheckProblem make_gradcheck_problem(int base_size, int examples, std::uint64_t seed);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<double> per_example;
  // Same comparison against the plain two-point difference. Its O(eps^2)
  // truncation error alone exceeds 1e-4 on small coordinates, so it is
  // reported but not gated.
  double max_rel_error_two_point = 0.0;
};

// Central differences: (f(x+e) - f(x-e)) / 2e, or the fourth-order stencil
// (8[f(x+e) - f(x-e)] - [f(x+2e) - f(x-2e)]) / 12e.
enum class FdStencil { kTwoPoint, kFourPoint };

// Relative error per coordinate: |a - f| / max(|a|, |f|, floor), where a is
// the analytic and f the central-difference gradient.
inline constexpr double kGradCheckEps = 1e-3;
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckResult gradient_check(const GradCheckProblem& problem, const TrainConfig& cfg,
                               double eps = kGradCheckEps);

// Central finite difference of the configured loss with respect to row w.
std::vector<double> finite_difference_gradient(const ModelParams<double>& params,
                                               const ReferenceLogProbs& ref_lp,
                                               const PreferenceExample& ex, const TrainConfig& cfg,
                                               TokenId w, double eps,
                                               FdStencil stencil = FdStencil::kFourPoint);

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

// ----------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string experiment;
  std::string checkpoint_hash;
  std::string registry_hash;
  std::uint64_t seed = 0;
  std::vector<nlohmann::ordered_json> records;
  nlohmann::ordered_json aggregate = nlohmann::ordered_json::object();

  // Header line, one line per record, then {"aggregate": ...}.
  std::string serialize() const;
  static EvalReport parse(std::string_view text);
};

// "# label" line followed by "n prob" rows for each curve, blocks separated
// by a blank line.
std::string success_curve_plot(const std::vector<std::pair<std::string, std::vector<double>>>& curves);

}  // namespace neo
