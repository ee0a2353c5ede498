#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "neo/datasets.hpp"
#include "neo/io.hpp"
#include "neo/losses.hpp"
#include "neo/model.hpp"
#include "neo/tokenizer.hpp"

namespace neo {

inline constexpr std::string_view kRandomInit = "random";

struct TrainConfig {
  double beta = 0.2;
  double learning_rate = 0.02;
  int batch_size = 1;
  double early_stop_delta = 0.2;
  int smoothing_window = 50;
  int max_steps = 5000;
  std::uint64_t seed = 0;
  LossVariant variant = LossVariant::kApoUpStandard;
  std::string init_token = "ensure";  // or "random"

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
  // SHA-256 of the canonical key=value form.
  std::string hash() const;
};

// Copies init_token's embedding row into row w (or draws N(0, 0.02^2) from
// cfg.seed when init_token is "random"). Every other row is untouched.
template <typename T>
ModelParams<T> init_neologism_embedding(const ModelParams<T>& params, const Vocabulary& vocab,
                                        TokenId w, const TrainConfig& cfg);

struct ReferenceLogProbs {
  double lp0_c = 0.0;
  double lp0_r = 0.0;
};

template <typename T>
ReferenceLogProbs reference_logprobs(const ReferenceSnapshot<T>& ref, const PreferenceExample& ex);

template <typename T>
struct EmbeddingGradient {
  double loss = 0.0;
  PairLogProbs logprobs;
  std::vector<double> grad;  // d entries
};

// Exact gradient of the configured preference loss with respect to row w
// only; occurrences of w in the prompt are summed. Throws when the prompt
// does not contain w.
template <typename T>
EmbeddingGradient<T> embedding_gradient(const ModelParams<T>& params, const ReferenceSnapshot<T>& ref,
                                        const PreferenceExample& ex, const TrainConfig& cfg, TokenId w);

template <typename T>
EmbeddingGradient<T> embedding_gradient(const ModelParams<T>& params, const ReferenceLogProbs& ref_lp,
                                        const PreferenceExample& ex, const TrainConfig& cfg, TokenId w);

// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Throws kNumeric on a non-finite gradient, leaving weights and state as they were.
template <typename T>
void optimizer_step(std::span<T> weights, std::span<const double> grad, AdamState& state,
                    double learning_rate);

enum class StopReason { kEarlyStop, kMaxSteps, kAborted };
std::string_view to_string(StopReason r);

struct TrainRunRecord {
  std::vector<double> losses;  // raw loss per step
  std::vector<double> ema;     // smoothed loss per step
  std::vector<float> initial_row;
  std::vector<float> final_row;
  int steps = 0;
  StopReason stop_reason = StopReason::kMaxSteps;
  std::string config_hash;
  std::string variant;
  std::string diagnostics;

  // Header object, then one {"step","loss","ema"} object per line.
  std::string to_jsonl() const;
  static TrainRunRecord parse_jsonl(std::string_view text);
};

// Thrown when training hits a non-finite loss or gradient.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, TrainRunRecord record)
      : Error(ErrorCode::kNumeric, what), record_(std::move(record)) {}
  const TrainRunRecord& record() const { return record_; }

 private:
  TrainRunRecord record_;
};

struct TrainResult {
  ModelParams<float> params;
  TrainRunRecord record;
};

// Optimizes row w only. The loss EMA starts at the first step's loss and
// decays with rate 1/smoothing_window; training stops once it has fallen
// early_stop_delta below that starting value, or at max_steps.
TrainResult train_neologism(const ModelParams<float>& params, const ReferenceSnapshot<float>& ref,
                            const std::vector<PreferenceExample>& dataset, const TrainConfig& cfg,
                            TokenId w);

// ----------------------------------------------------------------------------
// Neologism registry: learned rows stored apart from the frozen checkpoint.

struct RegistryEntry {
  std::string surface;
  std::vector<float> vector;
  std::string init_token;
  std::string config_hash;
  std::string checkpoint_hash;
};

class NeologismRegistry {
 public:
  // A missing file loads as an empty registry.
  static NeologismRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static NeologismRegistry parse(std::string_view text);

  // Replaces an entry with the same surface, otherwise appends.
  void put(RegistryEntry entry);
  const RegistryEntry* find(std::string_view surface) const;
  const std::vector<RegistryEntry>& entries() const { return entries_; }

 private:
  std::vector<RegistryEntry> entries_;
};

// Base model plus every registry entry appended as a neologism, in registry
// order.
struct LoadedModel {
  Vocabulary vocab;
  ModelParams<float> params;
  std::string checkpoint_hash;
};

LoadedModel load_model(const std::filesystem::path& checkpoint_path);
LoadedModel attach_registry(const LoadedModel& base, const NeologismRegistry& registry);

}  // namespace neo
