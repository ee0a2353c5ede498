#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "neo/io.hpp"
#include "neo/model.hpp"
#include "neo/tokenizer.hpp"

namespace neo {

// Cross-entropy pretraining of the base decoder on the synthetic corpus.
struct PretrainConfig {
  int layers = 4;
  int d_model = 128;
  int heads = 4;
  int context = 256;
  int batch_size = 16;
  double learning_rate = 3e-3;
  int warmup_steps = 100;
  int max_steps = 3000;
  int eval_every = 200;
  int patience = 3;
  double validation_fraction = 0.05;
  int validation_max = 400;  // cap on validation sequences
  double grad_clip = 1.0;

  static PretrainConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

struct PretrainEval {
  int step = 0;
  double loss = 0.0;  // mean per-token negative log-likelihood
  double perplexity = 0.0;
};

struct PretrainResult {
  Vocabulary vocab;
  ModelParams<float> params;  // best validation checkpoint
  std::vector<PretrainEval> history;  // history[0] is the untrained model
  int steps = 0;
  int best_step = 0;
};

// BOS + line words + EOS for every non-empty corpus line.
std::vector<TokenSeq> encode_corpus(const Vocabulary& vocab, std::string_view corpus);

// Mean per-token negative log-likelihood of every sequence.
double corpus_loss(const ModelParams<float>& params, const std::vector<TokenSeq>& sequences);

// Trains until validation loss fails to improve for `patience` consecutive
// evaluations, or max_steps. Deterministic in (corpus, cfg, seed).
PretrainResult pretrain(std::string_view corpus, const PretrainConfig& cfg, std::uint64_t seed);

}  // namespace neo
