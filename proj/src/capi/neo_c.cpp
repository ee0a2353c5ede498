#include "neo/neo.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "neo/commands.hpp"
#include "neo/datasets.hpp"

struct neo_options {
  neo::CommandOptions opts;
};

struct neo_session {
  explicit neo_session(neo::PromptSession s) : session(std::move(s)) {}
  neo::PromptSession session;
};

namespace {

thread_local std::string last_error;

neo_status to_status(neo::ErrorCode code) { return static_cast<neo_status>(static_cast<int>(code)); }

template <typename F>
neo_status guarded(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const neo::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return NEO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return NEO_ERR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

neo_status invalid(const char* what) {
  last_error = what;
  return NEO_ERR_INVALID_ARGUMENT;
}

std::uint64_t parse_u64(const char* value, const char* key) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const auto v = std::stoull(s, &used);
    if (used == s.size() && !s.empty() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  neo::fail(neo::ErrorCode::kInvalidArgument, std::string("invalid value for ") + key + ": '" + value + "'");
}

}  // namespace

extern "C" {

const char* neo_version(void) { return neo::kToolVersion; }

const char* neo_last_error(void) { return last_error.c_str(); }

void neo_free_string(char* s) { std::free(s); }

neo_status neo_options_create(neo_options** out) {
  if (!out) return invalid("neo_options_create: null output");
  return guarded([&] {
    *out = new neo_options();
    return NEO_OK;
  });
}

void neo_options_destroy(neo_options* opts) { delete opts; }

neo_status neo_options_set(neo_options* opts, const char* key, const char* value) {
  if (!opts || !key || !value) return invalid("neo_options_set: null argument");
  return guarded([&] {
    auto& o = opts->opts;
    const std::string k(key);
    if (k == "checkpoint") o.checkpoint = value;
    else if (k == "registry") o.registry = value;
    else if (k == "dataset") o.dataset = value;
    else if (k == "config") o.config = value;
    else if (k == "out") o.out = value;
    else if (k == "kind") o.kind = value;
    else if (k == "surface") o.surface = value;
    else if (k == "prompt") o.prompt = value;
    else if (k == "seed") {
      o.seed = parse_u64(value, key);
      o.seed_given = true;
    } else if (k == "max_tokens") o.max_tokens = static_cast<int>(parse_u64(value, key));
    else if (k == "temperature") {
      char* end = nullptr;
      const double t = std::strtod(value, &end);
      neo::require(end && *end == '\0' && std::isfinite(t) && t > 0, neo::ErrorCode::kInvalidArgument,
                   std::string("invalid temperature '") + value + "'");
      o.temperature = t;
    } else if (k == "greedy") o.greedy = std::string(value) == "1" || std::string(value) == "true";
    else neo::fail(neo::ErrorCode::kInvalidArgument, "unknown option '" + k + "'");
    return NEO_OK;
  });
}

neo_status neo_run(const char* command, const neo_options* opts, char** summary) {
  if (!command || !opts) return invalid("neo_run: null argument");
  if (summary) *summary = nullptr;
  return guarded([&] {
    const std::string c(command);
    neo::CommandOutcome outcome;
    if (c == "pretrain") outcome = neo::cmd_pretrain(opts->opts);
    else if (c == "dataset") outcome = neo::cmd_dataset(opts->opts);
    else if (c == "teach") outcome = neo::cmd_teach(opts->opts);
    else if (c == "eval") outcome = neo::cmd_eval(opts->opts);
    else if (c == "gen") outcome = neo::cmd_gen(opts->opts);
    else neo::fail(neo::ErrorCode::kInvalidArgument, "unknown command '" + c + "'");
    if (summary) *summary = copy_string(outcome.summary);
    if (outcome.invariant_failed) {
      last_error = outcome.summary;
      return NEO_ERR_INVARIANT;
    }
    return NEO_OK;
  });
}

neo_sample_options neo_sample_defaults(void) {
  const neo::SampleOptions d;
  return {d.max_tokens, d.temperature, d.greedy ? 1 : 0, d.seed};
}

neo_status neo_session_open(const char* checkpoint, const char* registry, uint64_t seed, neo_session** out) {
  if (!checkpoint || !out) return invalid("neo_session_open: null argument");
  *out = nullptr;
  return guarded([&] {
    const std::filesystem::path reg = registry ? std::filesystem::path(registry) : neo::default_registry(checkpoint);
    *out = new neo_session(neo::PromptSession(checkpoint, reg, seed));
    return NEO_OK;
  });
}

void neo_session_close(neo_session* session) { delete session; }

neo_status neo_session_generate(neo_session* session, const char* prompt, const neo_sample_options* options,
                                char** text) {
  if (!session || !prompt || !text) return invalid("neo_session_generate: null argument");
  *text = nullptr;
  return guarded([&] {
    neo::SampleOptions so;
    if (options) {
      so.max_tokens = options->max_tokens;
      so.temperature = options->temperature;
      so.greedy = options->greedy != 0;
      so.seed = options->seed;
    }
    *text = copy_string(session->session.generate(prompt, so));
    return NEO_OK;
  });
}

neo_status neo_session_logprob(neo_session* session, const char* prompt, const char* response, double* out) {
  if (!session || !prompt || !response || !out) return invalid("neo_session_logprob: null argument");
  return guarded([&] {
    *out = session->session.logprob(prompt, response);
    return NEO_OK;
  });
}

neo_status neo_session_vocab(neo_session* session, int* base_size, int* total_size) {
  if (!session) return invalid("neo_session_vocab: null session");
  const auto& v = session->session.model().vocab;
  if (base_size) *base_size = static_cast<int>(v.base_size());
  if (total_size) *total_size = static_cast<int>(v.size());
  return NEO_OK;
}

neo_status neo_session_next_probs(neo_session* session, const char* prompt, double* probs, int capacity) {
  if (!session || !prompt || !probs) return invalid("neo_session_next_probs: null argument");
  return guarded([&] {
    const auto& model = session->session.model();
    neo::require(capacity >= static_cast<int>(model.vocab.size()), neo::ErrorCode::kInvalidArgument,
                 "probability buffer too small");
    const auto logits = neo::next_token_logits(model.params, neo::chat_prompt(model.vocab, prompt));
    double mx = -INFINITY;
    for (float l : logits) mx = std::max(mx, static_cast<double>(l));
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      probs[i] = std::exp(static_cast<double>(logits[i]) - mx);
      total += probs[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= total;
    return NEO_OK;
  });
}

neo_status neo_session_repl_line(neo_session* session, const char* line, char** reply, int* quit) {
  if (!session || !line || !reply || !quit) return invalid("neo_session_repl_line: null argument");
  *reply = nullptr;
  return guarded([&] {
    bool q = false;
    *reply = copy_string(session->session.repl_line(line, q));
    *quit = q ? 1 : 0;
    return NEO_OK;
  });
}

}  // extern "C"
