#include "neo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "neo/rng.hpp"
#include "neo/transformer.hpp"

namespace neo {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ----------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  require(beta > 0 && std::isfinite(beta), ErrorCode::kInvalidArgument, "beta must be positive");
  require(learning_rate > 0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
          "learning_rate must be positive");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be at least 1");
  require(early_stop_delta > 0, ErrorCode::kInvalidArgument, "early_stop_delta must be positive");
  require(smoothing_window >= 1, ErrorCode::kInvalidArgument, "smoothing_window must be at least 1");
  require(max_steps >= 1, ErrorCode::kInvalidArgument, "max_steps must be at least 1");
  require(!init_token.empty(), ErrorCode::kInvalidArgument, "init_token must be set");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.beta = kv.get("beta", c.beta);
  c.learning_rate = kv.get("learning_rate", c.learning_rate);
  c.batch_size = kv.get("batch_size", c.batch_size);
  c.early_stop_delta = kv.get("early_stop_delta", c.early_stop_delta);
  c.smoothing_window = kv.get("smoothing_window", c.smoothing_window);
  c.max_steps = kv.get("max_steps", c.max_steps);
  c.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<long long>(c.seed)));
  c.variant = parse_loss_variant(kv.get("variant", std::string(to_string(c.variant))));
  c.init_token = kv.get("init_token", c.init_token);
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("beta", format_double(beta));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("early_stop_delta", format_double(early_stop_delta));
  kv.set("smoothing_window", std::to_string(smoothing_window));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("variant", std::string(to_string(variant)));
  kv.set("init_token", init_token);
  return kv;
}

std::string TrainConfig::hash() const { return sha256_hex(to_config().serialize()); }

// ----------------------------------------------------------------------------
// Initialization and gradients

template <typename T>
ModelParams<T> init_neologism_embedding(const ModelParams<T>& params, const Vocabulary& vocab,
                                        TokenId w, const TrainConfig& cfg) {
  require(vocab.is_neologism(w) && params.is_trainable_row(w), ErrorCode::kInvalidArgument,
          "token " + std::to_string(w) + " is not a neologism row");
  ModelParams<T> out = params;
  if (cfg.init_token == kRandomInit) {
    Rng rng(cfg.seed);
    for (int j = 0; j < params.shape.d_model; ++j) out.token_embedding(w, j) = static_cast<T>(0.02 * rng.normal());
    return out;
  }
  const auto src = vocab.find(cfg.init_token);
  require(src.has_value() && !vocab.is_neologism(*src), ErrorCode::kVocabulary,
          "unknown init token '" + cfg.init_token + "'");
  out.token_embedding.row(w) = params.token_embedding.row(*src);
  return out;
}

namespace {

// Prompt+chosen and prompt+rejected packed into one forward pass. The
// reference log-probs go through the same pass, so at theta = theta_0 the
// two sides agree bit for bit.
template <typename T>
struct PairPass {
  PackedBatch batch;
  std::vector<int> rows;
  std::vector<TokenId> targets;
  std::size_t n_chosen = 0;
  ForwardState<T> state;
  Matrix<T> logp;
  double lp_c = 0.0;
  double lp_r = 0.0;
};

template <typename T>
void run_pair(const ModelParams<T>& params, const PreferenceExample& ex, PairPass<T>& pass) {
  require(!ex.chosen.empty() && !ex.rejected.empty(), ErrorCode::kInvalidArgument,
          "preference responses must be non-empty token sequences");
  for (const TokenSeq* response : {&ex.chosen, &ex.rejected}) {
    const int offset = pass.batch.rows();
    TokenSeq full = ex.prompt;
    full.insert(full.end(), response->begin(), response->end());
    pass.batch.add(full);
    for (std::size_t t = 0; t < response->size(); ++t) {
      pass.rows.push_back(offset + static_cast<int>(ex.prompt.size() + t) - 1);
      pass.targets.push_back((*response)[t]);
    }
  }
  for (TokenId id : pass.targets) {
    require(id >= 0 && id < params.shape.base_size, ErrorCode::kInvalidArgument,
            "response token " + std::to_string(id) + " is not a base-vocabulary token");
  }
  pass.n_chosen = ex.chosen.size();
  forward(params, pass.batch, pass.state, pass.rows);
  pass.logp = log_softmax_rows(pass.state.logits);
  for (std::size_t r = 0; r < pass.rows.size(); ++r) {
    const double v = static_cast<double>(pass.logp(static_cast<Eigen::Index>(r), pass.targets[r]));
    (r < pass.n_chosen ? pass.lp_c : pass.lp_r) += v;
  }
}

}  // namespace

template <typename T>
ReferenceLogProbs reference_logprobs(const ReferenceSnapshot<T>& ref, const PreferenceExample& ex) {
  PairPass<T> pass;
  run_pair(ref.params(), ex, pass);
  return {pass.lp_c, pass.lp_r};
}

template <typename T>
EmbeddingGradient<T> embedding_gradient(const ModelParams<T>& params, const ReferenceLogProbs& ref_lp,
                                        const PreferenceExample& ex, const TrainConfig& cfg, TokenId w) {
  require(std::find(ex.prompt.begin(), ex.prompt.end(), w) != ex.prompt.end(), ErrorCode::kInvalidArgument,
          "prompt does not contain neologism " + std::to_string(w));
  PairPass<T> pass;
  run_pair(params, ex, pass);
  const auto& rows = pass.rows;
  const auto& targets = pass.targets;
  const auto& logp = pass.logp;
  const auto& batch = pass.batch;
  const std::size_t n_chosen = pass.n_chosen;
  const double lp_c = pass.lp_c, lp_r = pass.lp_r;

  EmbeddingGradient<T> out;
  out.logprobs = {lp_c, lp_r, ref_lp.lp0_c, ref_lp.lp0_r};
  const LossValue loss = preference_loss(out.logprobs, cfg.beta, cfg.variant);
  out.loss = loss.value;

  // d lp / d logits = onehot(target) - softmax
  Matrix<T> dlogits = -logp.array().exp().matrix();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    dlogits(ri, targets[r]) += T(1);
    dlogits.row(ri) *= static_cast<T>(r < n_chosen ? loss.d_lp_c : loss.d_lp_r);
  }
  Matrix<T> d_input;
  backward<T>(params, pass.state, dlogits, nullptr, &d_input);

  out.grad.assign(static_cast<std::size_t>(params.shape.d_model), 0.0);
  for (int i = 0; i < batch.rows(); ++i) {
    if (batch.ids[static_cast<std::size_t>(i)] != w) continue;
    for (int j = 0; j < params.shape.d_model; ++j) out.grad[static_cast<std::size_t>(j)] += static_cast<double>(d_input(i, j));
  }
  return out;
}

template <typename T>
EmbeddingGradient<T> embedding_gradient(const ModelParams<T>& params, const ReferenceSnapshot<T>& ref,
                                        const PreferenceExample& ex, const TrainConfig& cfg, TokenId w) {
  require(std::find(ex.prompt.begin(), ex.prompt.end(), w) != ex.prompt.end(), ErrorCode::kInvalidArgument,
          "prompt does not contain neologism " + std::to_string(w));
  return embedding_gradient(params, reference_logprobs(ref, ex), ex, cfg, w);
}

// ----------------------------------------------------------------------------
// Adam

template <typename T>
void optimizer_step(std::span<T> weights, std::span<const double> grad, AdamState& state,
                    double learning_rate) {
  require(weights.size() == grad.size(), ErrorCode::kInvalidArgument, "optimizer: shape mismatch");
  for (double g : grad) {
    require(std::isfinite(g), ErrorCode::kNumeric, "optimizer: non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(grad.size(), 0.0);
    state.v.assign(grad.size(), 0.0);
  }
  require(state.m.size() == grad.size(), ErrorCode::kInvalidArgument, "optimizer: state shape mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grad[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    weights[i] = static_cast<T>(static_cast<double>(weights[i]) -
                                learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEps));
  }
}

// ----------------------------------------------------------------------------
// Training loop

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kEarlyStop: return "early-stop";
    case StopReason::kMaxSteps: return "max-steps";
    case StopReason::kAborted: return "aborted";
  }
  return "unknown";
}

namespace {

StopReason parse_stop_reason(std::string_view s) {
  for (auto r : {StopReason::kEarlyStop, StopReason::kMaxSteps, StopReason::kAborted}) {
    if (to_string(r) == s) return r;
  }
  fail(ErrorCode::kFormat, "unknown stop reason '" + std::string(s) + "'");
}

std::vector<float> row_of(const ModelParams<float>& p, TokenId w) {
  std::vector<float> out(static_cast<std::size_t>(p.shape.d_model));
  for (int j = 0; j < p.shape.d_model; ++j) out[static_cast<std::size_t>(j)] = p.token_embedding(w, j);
  return out;
}

}  // namespace

std::string TrainRunRecord::to_jsonl() const {
  nlohmann::ordered_json head;
  head["record"] = "train_run";
  head["steps"] = steps;
  head["stop_reason"] = std::string(to_string(stop_reason));
  head["config_hash"] = config_hash;
  head["variant"] = variant;
  head["initial_row"] = initial_row;
  head["final_row"] = final_row;
  if (!diagnostics.empty()) head["diagnostics"] = diagnostics;
  std::string out = head.dump() + "\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    nlohmann::ordered_json line;
    line["step"] = i + 1;
    line["loss"] = losses[i];
    line["ema"] = ema[i];
    out += line.dump() + "\n";
  }
  return out;
}

TrainRunRecord TrainRunRecord::parse_jsonl(std::string_view text) {
  TrainRunRecord r;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (header) {
        require(j.value("record", "") == "train_run", ErrorCode::kFormat, "not a training log");
        r.steps = j.at("steps").get<int>();
        r.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
        r.config_hash = j.at("config_hash").get<std::string>();
        r.variant = j.at("variant").get<std::string>();
        r.initial_row = j.at("initial_row").get<std::vector<float>>();
        r.final_row = j.at("final_row").get<std::vector<float>>();
        r.diagnostics = j.value("diagnostics", "");
        header = false;
      } else {
        r.losses.push_back(j.at("loss").get<double>());
        r.ema.push_back(j.at("ema").get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, std::string("training log: ") + e.what());
    }
  }
  require(!header && static_cast<int>(r.losses.size()) == r.steps, ErrorCode::kFormat,
          "training log: step count does not match the loss trace");
  return r;
}

TrainResult train_neologism(const ModelParams<float>& params, const ReferenceSnapshot<float>& ref,
                            const std::vector<PreferenceExample>& dataset, const TrainConfig& cfg,
                            TokenId w) {
  cfg.validate();
  require(!dataset.empty(), ErrorCode::kInvalidArgument, "training dataset is empty");
  require(params.is_trainable_row(w), ErrorCode::kInvalidArgument,
          "token " + std::to_string(w) + " is not a neologism row");
  for (const auto& ex : dataset) {
    require(std::find(ex.prompt.begin(), ex.prompt.end(), w) != ex.prompt.end(),
            ErrorCode::kInvalidArgument, "a training prompt does not contain the neologism");
  }

  std::vector<ReferenceLogProbs> ref_lp;
  ref_lp.reserve(dataset.size());
  for (const auto& ex : dataset) {
    ref_lp.push_back(reference_logprobs(ref, ex));
    require(std::isfinite(ref_lp.back().lp0_c) && std::isfinite(ref_lp.back().lp0_r), ErrorCode::kNumeric,
            "reference log-probability is not finite");
  }

  TrainResult result{params, {}};
  TrainRunRecord& rec = result.record;
  rec.config_hash = cfg.hash();
  rec.variant = std::string(to_string(cfg.variant));
  rec.initial_row = row_of(params, w);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_index = [&] {
    if (cursor == order.size()) {
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto d = static_cast<std::size_t>(params.shape.d_model);
  AdamState adam;
  double ema = 0.0;
  double ema_start = 0.0;
  rec.stop_reason = StopReason::kMaxSteps;
  auto abort_run = [&](const std::string& why) {
    rec.stop_reason = StopReason::kAborted;
    rec.diagnostics = why;
    rec.steps = static_cast<int>(rec.losses.size());
    rec.final_row = row_of(result.params, w);
    throw TrainingAborted("training aborted: " + why, rec);
  };

  for (int step = 1; step <= cfg.max_steps; ++step) {
    double loss = 0.0;
    std::vector<double> grad(d, 0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = next_index();
      EmbeddingGradient<float> g;
      try {
        g = embedding_gradient(result.params, ref_lp[idx], dataset[idx], cfg, w);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        abort_run(std::string(e.what()) + " at step " + std::to_string(step));
      }
      loss += g.loss;
      for (std::size_t j = 0; j < d; ++j) grad[j] += g.grad[j];
    }
    loss /= cfg.batch_size;
    for (double& g : grad) g /= cfg.batch_size;

    if (!std::isfinite(loss)) abort_run("non-finite loss at step " + std::to_string(step));
    if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
      abort_run("non-finite gradient at step " + std::to_string(step));
    }

    if (step == 1) {
      ema = loss;
      ema_start = loss;
    } else {
      ema += (loss - ema) / cfg.smoothing_window;
    }
    rec.losses.push_back(loss);
    rec.ema.push_back(ema);

    optimizer_step(std::span<float>(result.params.token_embedding.row(w).data(), d), grad, adam,
                   cfg.learning_rate);

    if (ema_start - ema >= cfg.early_stop_delta) {
      rec.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }
  rec.steps = static_cast<int>(rec.losses.size());
  rec.final_row = row_of(result.params, w);
  return result;
}

// ----------------------------------------------------------------------------
// Registry

void NeologismRegistry::put(RegistryEntry entry) {
  for (auto& e : entries_) {
    if (e.surface == entry.surface) {
      e = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

const RegistryEntry* NeologismRegistry::find(std::string_view surface) const {
  for (const auto& e : entries_) {
    if (e.surface == surface) return &e;
  }
  return nullptr;
}

std::string NeologismRegistry::serialize() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::ordered_json j;
    j["surface"] = e.surface;
    j["init_token"] = e.init_token;
    j["config_hash"] = e.config_hash;
    j["checkpoint_hash"] = e.checkpoint_hash;
    j["dim"] = e.vector.size();
    j["vector"] = e.vector;
    out += j.dump() + "\n";
  }
  return out;
}

NeologismRegistry NeologismRegistry::parse(std::string_view text) {
  NeologismRegistry reg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    RegistryEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.surface = j.at("surface").get<std::string>();
      e.init_token = j.at("init_token").get<std::string>();
      e.config_hash = j.at("config_hash").get<std::string>();
      e.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
      e.vector = j.at("vector").get<std::vector<float>>();
      require(j.at("dim").get<std::size_t>() == e.vector.size(), ErrorCode::kFormat,
              "registry entry '" + e.surface + "': dim does not match the vector");
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::kFormat, std::string("registry: ") + ex.what());
    }
    require(reg.find(e.surface) == nullptr, ErrorCode::kFormat,
            "registry: duplicate surface '" + e.surface + "'");
    reg.entries_.push_back(std::move(e));
  }
  return reg;
}

NeologismRegistry NeologismRegistry::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return parse(read_file(path));
}

void NeologismRegistry::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

LoadedModel load_model(const std::filesystem::path& checkpoint_path) {
  const std::string bytes = read_file(checkpoint_path);
  Checkpoint ck = parse_checkpoint(bytes);
  const auto vocab_path = checkpoint_path.parent_path() / ck.vocab_path;
  Vocabulary vocab = Vocabulary::load(vocab_path);
  require(static_cast<int>(vocab.size()) == ck.params.shape.vocab_size &&
              static_cast<int>(vocab.base_size()) == ck.params.shape.base_size,
          ErrorCode::kFormat, "vocabulary '" + vocab_path.string() + "' does not match the checkpoint");
  return {std::move(vocab), std::move(ck.params), sha256_hex(bytes)};
}

LoadedModel attach_registry(const LoadedModel& base, const NeologismRegistry& registry) {
  LoadedModel out = base;
  for (const auto& e : registry.entries()) {
    require(e.checkpoint_hash == base.checkpoint_hash, ErrorCode::kInvalidArgument,
            "neologism '" + e.surface + "' was trained against a different checkpoint");
    require(static_cast<int>(e.vector.size()) == base.params.shape.d_model, ErrorCode::kFormat,
            "neologism '" + e.surface + "' has the wrong dimension");
    auto [vocab, id] = out.vocab.add_neologism(e.surface);
    out.vocab = std::move(vocab);
    out.params = out.params.with_neologism_rows(1);
    for (int j = 0; j < out.params.shape.d_model; ++j) out.params.token_embedding(id, j) = e.vector[static_cast<std::size_t>(j)];
  }
  return out;
}

#define NEO_INSTANTIATE(T)                                                                        \
  template ModelParams<T> init_neologism_embedding<T>(const ModelParams<T>&, const Vocabulary&,   \
                                                      TokenId, const TrainConfig&);               \
  template ReferenceLogProbs reference_logprobs<T>(const ReferenceSnapshot<T>&,                   \
                                                   const PreferenceExample&);                     \
  template EmbeddingGradient<T> embedding_gradient<T>(const ModelParams<T>&,                      \
                                                      const ReferenceSnapshot<T>&,                \
                                                      const PreferenceExample&,                   \
                                                      const TrainConfig&, TokenId);               \
  template EmbeddingGradient<T> embedding_gradient<T>(const ModelParams<T>&,                      \
                                                      const ReferenceLogProbs&,                   \
                                                      const PreferenceExample&,                   \
                                                      const TrainConfig&, TokenId);               \
  template void optimizer_step<T>(std::span<T>, std::span<const double>, AdamState&, double);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)

#undef NEO_INSTANTIATE

}  // namespace neo
