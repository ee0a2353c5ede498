#pragma once

// Command implementations behind the C API and the `neo` tool. Every command
// that writes files also writes a RunManifest next to its main output.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neo/trainer.hpp"

namespace neo {

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string version = kToolVersion;

  std::string serialize() const;
  static RunManifest parse(std::string_view text);
};

// "<output>.manifest.json"
std::filesystem::path manifest_path(const std::filesystem::path& output);

struct CommandOptions {
  std::string checkpoint;
  std::string registry;
  std::string dataset;
  std::string config;
  std::string out;
  std::string kind;
  std::string surface;
  std::string prompt;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int max_tokens = 64;
  double temperature = 1.0;
  bool greedy = false;
};

struct CommandOutcome {
  std::string summary;
  bool invariant_failed = false;
};

// Generates the corpus from the spec in `config`, pretrains, and writes the
// checkpoint to `out` with its vocabulary alongside ("<stem>.vocab") and a
// validation log ("<out>.log.jsonl").
CommandOutcome cmd_pretrain(const CommandOptions& opts);

// kind = length | diversity | quality. Writes the preference dataset to
// `out`. Quality pairs need `checkpoint`.
CommandOutcome cmd_dataset(const CommandOptions& opts);

// Trains `surface` on `dataset` against the frozen `checkpoint` and stores
// the learned row in `registry`. The checkpoint file is never written.
CommandOutcome cmd_teach(const CommandOptions& opts);

// kind = length | diversity | quality | invariance | gradcheck. Writes the
// report to `out`; invariant_failed is set when invariance or gradcheck
// fails.
CommandOutcome cmd_eval(const CommandOptions& opts);

// One sampled response to `prompt`; written to `out` (with a manifest) when
// set.
CommandOutcome cmd_gen(const CommandOptions& opts);

// Default registry location for a checkpoint: "<checkpoint dir>/registry.jsonl".
std::filesystem::path default_registry(const std::filesystem::path& checkpoint);

// Checkpoint plus every neologism in the registry, ready for prompting.
class PromptSession {
 public:
  // Lines without a fixed seed use derive_seed(seed, line index).
  PromptSession(const std::filesystem::path& checkpoint, const std::filesystem::path& registry,
                std::uint64_t seed = 0);

  const LoadedModel& model() const { return model_; }

  // Response text for a prompt; the prompt is wrapped in the chat format.
  std::string generate(std::string_view prompt, const SampleOptions& options) const;
  double logprob(std::string_view prompt, std::string_view response) const;

  // One REPL line: ":seed N" fixes the seed for later lines, ":quit" sets
  // quit, anything else is answered. Out-of-vocabulary words produce an
  // error message rather than an exception.
  std::string repl_line(std::string_view line, bool& quit);

 private:
  LoadedModel model_;
  std::uint64_t base_seed_ = 0;
  std::optional<std::uint64_t> fixed_seed_;
  std::uint64_t line_ = 0;
};

}  // namespace neo
