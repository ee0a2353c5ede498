#include "neo/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "neo/rng.hpp"
#include "neo/transformer.hpp"

namespace neo {

PretrainConfig PretrainConfig::from_config(const KeyValueConfig& kv) {
  PretrainConfig c;
  c.layers = kv.get("layers", c.layers);
  c.d_model = kv.get("d_model", c.d_model);
  c.heads = kv.get("heads", c.heads);
  c.context = kv.get("context", c.context);
  c.batch_size = kv.get("batch_size", c.batch_size);
  c.learning_rate = kv.get("learning_rate", c.learning_rate);
  c.warmup_steps = kv.get("warmup_steps", c.warmup_steps);
  c.max_steps = kv.get("max_steps", c.max_steps);
  c.eval_every = kv.get("eval_every", c.eval_every);
  c.patience = kv.get("patience", c.patience);
  c.validation_fraction = kv.get("validation_fraction", c.validation_fraction);
  c.validation_max = kv.get("validation_max", c.validation_max);
  c.grad_clip = kv.get("grad_clip", c.grad_clip);
  c.validate();
  return c;
}

void PretrainConfig::validate() const {
  ModelShape{layers, d_model, heads, context, 4, 4}.validate();
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be at least 1");
  require(learning_rate > 0, ErrorCode::kInvalidArgument, "learning_rate must be positive");
  require(warmup_steps >= 0, ErrorCode::kInvalidArgument, "warmup_steps must be nonnegative");
  require(max_steps >= 1, ErrorCode::kInvalidArgument, "max_steps must be at least 1");
  require(eval_every >= 1, ErrorCode::kInvalidArgument, "eval_every must be at least 1");
  require(patience >= 1, ErrorCode::kInvalidArgument, "patience must be at least 1");
  require(validation_fraction > 0 && validation_fraction < 1, ErrorCode::kInvalidArgument,
          "validation_fraction must be in (0, 1)");
  require(validation_max >= 1, ErrorCode::kInvalidArgument, "validation_max must be at least 1");
  require(grad_clip > 0, ErrorCode::kInvalidArgument, "grad_clip must be positive");
}

std::vector<TokenSeq> encode_corpus(const Vocabulary& vocab, std::string_view corpus) {
  std::vector<TokenSeq> out;
  std::size_t pos = 0;
  while (pos < corpus.size()) {
    std::size_t end = corpus.find('\n', pos);
    if (end == std::string_view::npos) end = corpus.size();
    const auto line = corpus.substr(pos, end - pos);
    pos = end + 1;
    if (word_count(line) == 0) continue;
    TokenSeq seq{Vocabulary::kBos};
    const TokenSeq body = vocab.encode(line);
    seq.insert(seq.end(), body.begin(), body.end());
    seq.push_back(Vocabulary::kEos);
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

struct BatchLoss {
  double nll = 0.0;  // summed over predicted tokens
  int tokens = 0;
};

// Next-token cross-entropy over every position of every sequence. When grads
// is non-null, accumulates d(sum nll)/d(params) * scale into it.
BatchLoss run_batch(const ModelParams<float>& params, const std::vector<const TokenSeq*>& seqs,
                    ModelParams<float>* grads, float scale) {
  PackedBatch batch;
  std::vector<int> rows;
  std::vector<TokenId> targets;
  for (const TokenSeq* s : seqs) {
    const int offset = batch.rows();
    batch.add(*s);
    for (std::size_t t = 0; t + 1 < s->size(); ++t) {
      rows.push_back(offset + static_cast<int>(t));
      targets.push_back((*s)[t + 1]);
    }
  }
  ForwardState<float> state;
  forward(params, batch, state, rows);
  Matrix<float> logp = log_softmax_rows(state.logits);
  BatchLoss out;
  out.tokens = static_cast<int>(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out.nll -= logp(static_cast<Eigen::Index>(r), targets[r]);
  if (grads) {
    Matrix<float> dlogits = logp.array().exp().matrix();
    for (std::size_t r = 0; r < rows.size(); ++r) dlogits(static_cast<Eigen::Index>(r), targets[r]) -= 1.0f;
    dlogits *= scale;
    backward<float>(params, state, dlogits, grads, nullptr);
  }
  return out;
}

std::vector<Matrix<float>*> tensors(ModelParams<float>& p) {
  std::vector<Matrix<float>*> out;
  p.visit([&](std::string_view, Matrix<float>& m) { out.push_back(&m); });
  return out;
}

}  // namespace

double corpus_loss(const ModelParams<float>& params, const std::vector<TokenSeq>& sequences) {
  double nll = 0.0;
  long tokens = 0;
  constexpr std::size_t kChunk = 16;
  for (std::size_t i = 0; i < sequences.size(); i += kChunk) {
    std::vector<const TokenSeq*> chunk;
    for (std::size_t j = i; j < std::min(sequences.size(), i + kChunk); ++j) chunk.push_back(&sequences[j]);
    const BatchLoss b = run_batch(params, chunk, nullptr, 0.0f);
    nll += b.nll;
    tokens += b.tokens;
  }
  require(tokens > 0, ErrorCode::kInvalidArgument, "no tokens to evaluate");
  return nll / static_cast<double>(tokens);
}

PretrainResult pretrain(std::string_view corpus, const PretrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PretrainResult result{Vocabulary::build(corpus), {}, {}, 0, 0};
  std::vector<TokenSeq> all = encode_corpus(result.vocab, corpus);
  for (const auto& s : all) {
    require(static_cast<int>(s.size()) <= cfg.context, ErrorCode::kInvalidArgument,
            "a corpus line does not fit in the context window");
  }

  Rng rng(seed);
  rng.shuffle(std::span<TokenSeq>(all));
  const auto n_val = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.validation_max),
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.validation_fraction * all.size()))));
  require(all.size() > n_val, ErrorCode::kInvalidArgument, "corpus too small to hold out validation data");
  const std::vector<TokenSeq> val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<TokenSeq> train(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());

  const int base = static_cast<int>(result.vocab.size());
  const ModelShape shape{cfg.layers, cfg.d_model, cfg.heads, cfg.context, base, base};
  ModelParams<float> params = ModelParams<float>::random(shape, derive_seed(seed, 1));
  ModelParams<float> grads = ModelParams<float>::allocate(shape);
  ModelParams<float> m1 = ModelParams<float>::allocate(shape);
  ModelParams<float> m2 = ModelParams<float>::allocate(shape);
  const auto p_list = tensors(params);
  const auto g_list = tensors(grads);
  const auto m_list = tensors(m1);
  const auto v_list = tensors(m2);

  auto evaluate = [&](int step) {
    const double loss = corpus_loss(params, val);
    result.history.push_back({step, loss, std::exp(loss)});
    return loss;
  };

  double best = evaluate(0);
  result.params = params;
  int stale = 0;

  std::size_t cursor = train.size();
  Rng order_rng(derive_seed(seed, 2));
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const TokenSeq*> batch;
    int tokens = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == train.size()) {
        order_rng.shuffle(std::span<TokenSeq>(train));
        cursor = 0;
      }
      batch.push_back(&train[cursor++]);
      tokens += static_cast<int>(batch.back()->size()) - 1;
    }
    for (auto* g : g_list) g->setZero();
    run_batch(params, batch, &grads, 1.0f / static_cast<float>(tokens));

    double norm2 = 0.0;
    for (auto* g : g_list) norm2 += static_cast<double>(g->squaredNorm());
    require(std::isfinite(norm2), ErrorCode::kNumeric, "pretraining diverged at step " + std::to_string(step));
    const double clip = std::min(1.0, cfg.grad_clip / (std::sqrt(norm2) + 1e-12));

    double lr = cfg.learning_rate;
    if (step <= cfg.warmup_steps) {
      lr *= static_cast<double>(step) / cfg.warmup_steps;
    } else {
      const double progress = static_cast<double>(step - cfg.warmup_steps) /
                              std::max(1, cfg.max_steps - cfg.warmup_steps);
      lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    const double c1 = 1.0 - std::pow(0.9, step);
    const double c2 = 1.0 - std::pow(0.999, step);
    const auto step_size = static_cast<float>(lr / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    for (std::size_t t = 0; t < p_list.size(); ++t) {
      auto g = g_list[t]->array() * static_cast<float>(clip);
      auto& m = *m_list[t];
      auto& v = *v_list[t];
      m.array() = 0.9f * m.array() + 0.1f * g;
      v.array() = 0.999f * v.array() + 0.001f * g.square();
      p_list[t]->array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + 1e-8f);
    }

    result.steps = step;
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      const double loss = evaluate(step);
      if (loss < best) {
        best = loss;
        result.params = params;
        result.best_step = step;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace neo
