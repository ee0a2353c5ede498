#include "neo/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "neo/io.hpp"
#include "neo/rng.hpp"
#include "neo/tokenizer.hpp"
#include "neo/transformer.hpp"

namespace neo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void ModelShape::validate() const {
  require(layers > 0 && d_model > 0 && heads > 0 && context > 0, ErrorCode::kInvalidArgument,
          "model shape: layers, d_model, heads and context must be positive");
  require(d_model % heads == 0, ErrorCode::kInvalidArgument,
          "model shape: d_model must be divisible by heads");
  require(base_size > Vocabulary::kControlCount && vocab_size >= base_size,
          ErrorCode::kInvalidArgument, "model shape: inconsistent vocabulary sizes");
}

template <typename T>
ModelParams<T> ModelParams<T>::allocate(const ModelShape& shape) {
  shape.validate();
  const int d = shape.d_model;
  ModelParams p;
  p.shape = shape;
  p.token_embedding = Matrix<T>::Zero(shape.vocab_size, d);
  p.position_embedding = Matrix<T>::Zero(shape.context, d);
  p.layers.resize(static_cast<std::size_t>(shape.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix<T>::Zero(1, d);
    l.ln1_bias = Matrix<T>::Zero(1, d);
    l.attn_w = Matrix<T>::Zero(d, 3 * d);
    l.attn_b = Matrix<T>::Zero(1, 3 * d);
    l.attn_proj_w = Matrix<T>::Zero(d, d);
    l.attn_proj_b = Matrix<T>::Zero(1, d);
    l.ln2_gain = Matrix<T>::Zero(1, d);
    l.ln2_bias = Matrix<T>::Zero(1, d);
    l.fc_w = Matrix<T>::Zero(d, shape.d_ff());
    l.fc_b = Matrix<T>::Zero(1, shape.d_ff());
    l.proj_w = Matrix<T>::Zero(shape.d_ff(), d);
    l.proj_b = Matrix<T>::Zero(1, d);
  }
  p.final_gain = Matrix<T>::Zero(1, d);
  p.final_bias = Matrix<T>::Zero(1, d);
  p.output_w = Matrix<T>::Zero(d, shape.base_size);
  p.output_b = Matrix<T>::Zero(1, shape.base_size);
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelShape& shape) {
  auto p = allocate(shape);
  for (auto& l : p.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
  }
  p.final_gain.setOnes();
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::random(const ModelShape& shape, std::uint64_t seed) {
  auto p = zeros(shape);
  Rng rng(seed);
  const double std_dev = 0.02;
  const double residual_std = std_dev / std::sqrt(2.0 * shape.layers);
  p.visit([&](std::string_view name, Matrix<T>& m) {
    if (name.ends_with("gain") || name.ends_with("_b") || name.ends_with("bias")) return;
    const double s = (name == "attn_proj_w" || name == "proj_w") ? residual_std : std_dev;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * s);
  });
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::with_neologism_rows(int count) const {
  require(count >= 0, ErrorCode::kInvalidArgument, "negative neologism row count");
  ModelParams out = *this;
  out.shape.vocab_size += count;
  out.token_embedding.conservativeResize(out.shape.vocab_size, Eigen::NoChange);
  out.token_embedding.bottomRows(count).setZero();
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](std::string_view, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

// ----------------------------------------------------------------------------
// Forward / backward

void PackedBatch::add(std::span<const TokenId> seq) {
  ids.insert(ids.end(), seq.begin(), seq.end());
  starts.push_back(static_cast<int>(ids.size()));
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& hat,
                Matrix<T>& out, std::vector<T>& rstd) {
  const auto n = x.rows();
  hat.resize(n, x.cols());
  out.resize(n, x.cols());
  rstd.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T rs = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[static_cast<std::size_t>(r)] = rs;
    hat.row(r) = (x.row(r).array() - mean) * rs;
    out.row(r) = hat.row(r).array() * gain.row(0).array() + bias.row(0).array();
  }
}

// Returns dx; accumulates gain/bias gradients when the pointers are non-null.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dout, const Matrix<T>& hat,
                              const std::vector<T>& rstd, const Matrix<T>& gain,
                              Matrix<T>* dgain, Matrix<T>* dbias) {
  if (dgain) dgain->row(0) += (dout.array() * hat.array()).colwise().sum().matrix();
  if (dbias) dbias->row(0) += dout.colwise().sum();
  Matrix<T> dhat = dout.array().rowwise() * gain.row(0).array();
  Matrix<T> dx(dout.rows(), dout.cols());
  for (Eigen::Index r = 0; r < dout.rows(); ++r) {
    const T mean_d = dhat.row(r).mean();
    const T mean_dh = (dhat.row(r).array() * hat.row(r).array()).mean();
    dx.row(r) = rstd[static_cast<std::size_t>(r)] *
                (dhat.row(r).array() - mean_d - hat.row(r).array() * mean_dh);
  }
  return dx;
}

template <typename T>
constexpr T kGeluK = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluC = static_cast<T>(0.044715);

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::tanh(kGeluK<T> * (x + kGeluC<T> * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T t = std::tanh(kGeluK<T> * (x + kGeluC<T> * x * x * x));
  return T(0.5) * (T(1) + t) +
         T(0.5) * x * (T(1) - t * t) * kGeluK<T> * (T(1) + T(3) * kGeluC<T> * x * x);
}

template <typename T>
void add_bias(Matrix<T>& m, const Matrix<T>& b) {
  m.rowwise() += b.row(0);
}

}  // namespace

template <typename T>
void forward(const ModelParams<T>& params, const PackedBatch& batch, ForwardState<T>& state,
             std::vector<int> logit_rows) {
  const auto& shape = params.shape;
  const int d = shape.d_model;
  const int hd = shape.head_dim();
  const int n = batch.rows();
  require(n > 0, ErrorCode::kInvalidArgument, "forward: empty batch");
  state.batch = batch;

  Matrix<T> x(n, d);
  for (int s = 0; s < batch.sequences(); ++s) {
    const int begin = batch.starts[s];
    const int len = batch.starts[s + 1] - begin;
    require(len <= shape.context, ErrorCode::kInvalidArgument,
            "sequence of " + std::to_string(len) + " tokens exceeds the context of " +
                std::to_string(shape.context));
    for (int t = 0; t < len; ++t) {
      const TokenId id = batch.ids[static_cast<std::size_t>(begin + t)];
      require(id >= 0 && id < shape.vocab_size, ErrorCode::kInvalidArgument,
              "token id " + std::to_string(id) + " outside the model vocabulary");
      x.row(begin + t) = params.token_embedding.row(id) + params.position_embedding.row(t);
    }
  }

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  state.layers.resize(params.layers.size());
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& w = params.layers[li];
    auto& c = state.layers[li];
    layer_norm(x, w.ln1_gain, w.ln1_bias, c.ln1_hat, c.ln1_out, c.ln1_rstd);
    c.qkv.noalias() = c.ln1_out * w.attn_w;
    add_bias(c.qkv, w.attn_b);

    c.attn.setZero(n, d);
    c.probs.resize(static_cast<std::size_t>(batch.sequences() * shape.heads));
    for (int s = 0; s < batch.sequences(); ++s) {
      const int begin = batch.starts[s];
      const int len = batch.starts[s + 1] - begin;
      for (int h = 0; h < shape.heads; ++h) {
        const auto q = c.qkv.block(begin, h * hd, len, hd);
        const auto k = c.qkv.block(begin, d + h * hd, len, hd);
        const auto v = c.qkv.block(begin, 2 * d + h * hd, len, hd);
        Matrix<T>& p = c.probs[static_cast<std::size_t>(s * shape.heads + h)];
        p.noalias() = (q * k.transpose()) * scale;
        for (int i = 0; i < len; ++i) {
          auto row = p.row(i);
          const T mx = row.head(i + 1).maxCoeff();
          row.head(i + 1) = (row.head(i + 1).array() - mx).exp();
          row.head(i + 1) /= row.head(i + 1).sum();
          row.tail(len - i - 1).setZero();
        }
        c.attn.block(begin, h * hd, len, hd).noalias() = p * v;
      }
    }
    Matrix<T> attn_out = c.attn * w.attn_proj_w;
    add_bias(attn_out, w.attn_proj_b);
    x += attn_out;

    layer_norm(x, w.ln2_gain, w.ln2_bias, c.ln2_hat, c.ln2_out, c.ln2_rstd);
    c.fc_pre.noalias() = c.ln2_out * w.fc_w;
    add_bias(c.fc_pre, w.fc_b);
    c.fc_act = c.fc_pre.unaryExpr([](T v) { return gelu(v); });
    Matrix<T> mlp_out = c.fc_act * w.proj_w;
    add_bias(mlp_out, w.proj_b);
    x += mlp_out;
  }

  layer_norm(x, params.final_gain, params.final_bias, state.final_hat, state.final_out,
             state.final_rstd);

  if (logit_rows.empty()) {
    logit_rows.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) logit_rows[static_cast<std::size_t>(i)] = i;
    state.logits.noalias() = state.final_out * params.output_w;
  } else {
    Matrix<T> selected(static_cast<Eigen::Index>(logit_rows.size()), d);
    for (std::size_t r = 0; r < logit_rows.size(); ++r) {
      require(logit_rows[r] >= 0 && logit_rows[r] < n, ErrorCode::kInvalidArgument,
              "forward: logit row out of range");
      selected.row(static_cast<Eigen::Index>(r)) = state.final_out.row(logit_rows[r]);
    }
    state.logits.noalias() = selected * params.output_w;
  }
  add_bias(state.logits, params.output_b);
  state.logit_rows = std::move(logit_rows);
}

template <typename T>
void backward(const ModelParams<T>& params, const ForwardState<T>& state,
              const Matrix<T>& dlogits, ModelParams<T>* grads, Matrix<T>* d_input) {
  const auto& shape = params.shape;
  const auto& batch = state.batch;
  const int d = shape.d_model;
  const int hd = shape.head_dim();
  const int n = batch.rows();
  require(dlogits.rows() == state.logits.rows() && dlogits.cols() == state.logits.cols(),
          ErrorCode::kInternal, "backward: dlogits shape mismatch");

  Matrix<T> d_final = Matrix<T>::Zero(n, d);
  {
    const Matrix<T> d_sel = dlogits * params.output_w.transpose();
    for (std::size_t r = 0; r < state.logit_rows.size(); ++r) {
      d_final.row(state.logit_rows[r]) += d_sel.row(static_cast<Eigen::Index>(r));
    }
    if (grads) {
      Matrix<T> selected(static_cast<Eigen::Index>(state.logit_rows.size()), d);
      for (std::size_t r = 0; r < state.logit_rows.size(); ++r) {
        selected.row(static_cast<Eigen::Index>(r)) = state.final_out.row(state.logit_rows[r]);
      }
      grads->output_w.noalias() += selected.transpose() * dlogits;
      grads->output_b.row(0) += dlogits.colwise().sum();
    }
  }
  Matrix<T> dx = layer_norm_backward(d_final, state.final_hat, state.final_rstd, params.final_gain,
                                     grads ? &grads->final_gain : nullptr,
                                     grads ? &grads->final_bias : nullptr);

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& w = params.layers[li];
    const auto& c = state.layers[li];
    LayerWeights<T>* g = grads ? &grads->layers[li] : nullptr;

    // MLP residual branch.
    if (g) {
      g->proj_w.noalias() += c.fc_act.transpose() * dx;
      g->proj_b.row(0) += dx.colwise().sum();
    }
    Matrix<T> d_fc = dx * w.proj_w.transpose();
    d_fc.array() *= c.fc_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
    if (g) {
      g->fc_w.noalias() += c.ln2_out.transpose() * d_fc;
      g->fc_b.row(0) += d_fc.colwise().sum();
    }
    const Matrix<T> d_ln2 = d_fc * w.fc_w.transpose();
    dx += layer_norm_backward(d_ln2, c.ln2_hat, c.ln2_rstd, w.ln2_gain, g ? &g->ln2_gain : nullptr,
                              g ? &g->ln2_bias : nullptr);

    // Attention residual branch.
    if (g) {
      g->attn_proj_w.noalias() += c.attn.transpose() * dx;
      g->attn_proj_b.row(0) += dx.colwise().sum();
    }
    const Matrix<T> d_attn = dx * w.attn_proj_w.transpose();
    Matrix<T> d_qkv = Matrix<T>::Zero(n, 3 * d);
    for (int s = 0; s < batch.sequences(); ++s) {
      const int begin = batch.starts[s];
      const int len = batch.starts[s + 1] - begin;
      for (int h = 0; h < shape.heads; ++h) {
        const auto q = c.qkv.block(begin, h * hd, len, hd);
        const auto k = c.qkv.block(begin, d + h * hd, len, hd);
        const auto v = c.qkv.block(begin, 2 * d + h * hd, len, hd);
        const Matrix<T>& p = c.probs[static_cast<std::size_t>(s * shape.heads + h)];
        const auto d_out = d_attn.block(begin, h * hd, len, hd);
        Matrix<T> d_p = d_out * v.transpose();
        d_qkv.block(begin, 2 * d + h * hd, len, hd).noalias() += p.transpose() * d_out;
        const auto row_dot = (d_p.array() * p.array()).rowwise().sum().eval();
        Matrix<T> d_s = (p.array() * (d_p.array().colwise() - row_dot)) * scale;
        d_qkv.block(begin, h * hd, len, hd).noalias() += d_s * k;
        d_qkv.block(begin, d + h * hd, len, hd).noalias() += d_s.transpose() * q;
      }
    }
    if (g) {
      g->attn_w.noalias() += c.ln1_out.transpose() * d_qkv;
      g->attn_b.row(0) += d_qkv.colwise().sum();
    }
    const Matrix<T> d_ln1 = d_qkv * w.attn_w.transpose();
    dx += layer_norm_backward(d_ln1, c.ln1_hat, c.ln1_rstd, w.ln1_gain, g ? &g->ln1_gain : nullptr,
                              g ? &g->ln1_bias : nullptr);
  }

  if (grads) {
    for (int s = 0; s < batch.sequences(); ++s) {
      const int begin = batch.starts[s];
      const int len = batch.starts[s + 1] - begin;
      for (int t = 0; t < len; ++t) {
        grads->token_embedding.row(batch.ids[static_cast<std::size_t>(begin + t)]) += dx.row(begin + t);
        grads->position_embedding.row(t) += dx.row(begin + t);
      }
    }
  }
  if (d_input) *d_input = std::move(dx);
}

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    const T lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

// ----------------------------------------------------------------------------
// Inference

namespace {

void check_prefix(const ModelShape& shape, std::span<const TokenId> prefix) {
  require(!prefix.empty() && prefix.front() == Vocabulary::kBos, ErrorCode::kInvalidArgument,
          "prefix must begin with BOS");
  require(static_cast<int>(prefix.size()) <= shape.context, ErrorCode::kInvalidArgument,
          "prefix of " + std::to_string(prefix.size()) + " tokens exceeds the context of " +
              std::to_string(shape.context));
}

}  // namespace

template <typename T>
std::vector<T> next_token_logits(const ModelParams<T>& params, std::span<const TokenId> prefix) {
  check_prefix(params.shape, prefix);
  PackedBatch batch;
  batch.add(prefix);
  ForwardState<T> state;
  forward(params, batch, state, {batch.rows() - 1});
  std::vector<T> out(static_cast<std::size_t>(params.shape.vocab_size),
                     -std::numeric_limits<T>::infinity());
  for (int i = 0; i < params.shape.base_size; ++i) out[static_cast<std::size_t>(i)] = state.logits(0, i);
  return out;
}

template <typename T>
double sequence_logprob(const ModelParams<T>& params, std::span<const TokenId> prompt,
                        std::span<const TokenId> response) {
  check_prefix(params.shape, prompt);
  for (TokenId id : response) {
    require(id >= 0 && id < params.shape.base_size, ErrorCode::kInvalidArgument,
            "response token " + std::to_string(id) + " is not a base-vocabulary token");
  }
  if (response.empty()) return 0.0;
  PackedBatch batch;
  TokenSeq full(prompt.begin(), prompt.end());
  full.insert(full.end(), response.begin(), response.end());
  check_prefix(params.shape, full);
  batch.add(full);
  std::vector<int> rows;
  for (std::size_t t = 0; t < response.size(); ++t) rows.push_back(static_cast<int>(prompt.size() + t) - 1);
  ForwardState<T> state;
  forward(params, batch, state, rows);
  const Matrix<T> logp = log_softmax_rows(state.logits);
  double total = 0.0;
  for (std::size_t t = 0; t < response.size(); ++t) {
    total += static_cast<double>(logp(static_cast<Eigen::Index>(t), response[t]));
  }
  return total;
}

template <typename T>
TokenSeq sample(const ModelParams<T>& params, std::span<const TokenId> prompt,
                const SampleOptions& options) {
  check_prefix(params.shape, prompt);
  require(options.greedy || options.temperature > 0.0, ErrorCode::kInvalidArgument,
          "sampling temperature must be positive");
  require(options.max_tokens >= 0, ErrorCode::kInvalidArgument, "max_tokens must be >= 0");
  Rng rng(options.seed);
  TokenSeq seq(prompt.begin(), prompt.end());
  TokenSeq out;
  ForwardState<T> state;
  std::vector<double> probs(static_cast<std::size_t>(params.shape.base_size));
  while (static_cast<int>(out.size()) < options.max_tokens &&
         static_cast<int>(seq.size()) < params.shape.context) {
    PackedBatch batch;
    batch.add(seq);
    forward(params, batch, state, {batch.rows() - 1});
    const auto logits = state.logits.row(0);
    TokenId next = 0;
    if (options.greedy) {
      Eigen::Index arg = 0;
      logits.maxCoeff(&arg);
      next = static_cast<TokenId>(arg);
    } else {
      const double mx = static_cast<double>(logits.maxCoeff());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = std::exp((static_cast<double>(logits(static_cast<Eigen::Index>(i))) - mx) /
                            options.temperature);
      }
      next = static_cast<TokenId>(rng.categorical(probs));
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr char kMagic[4] = {'N', 'E', 'O', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    require(pos_ + n <= bytes_.size(), ErrorCode::kFormat, "checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelParams<float>& params, std::string_view vocab_path) {
  const auto& s = params.shape;
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (int v : {s.layers, s.d_model, s.heads, s.context, s.vocab_size, s.base_size}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  put_u32(out, static_cast<std::uint32_t>(vocab_path.size()));
  out.append(vocab_path);
  params.visit([&](std::string_view, const Matrix<float>& m) {
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  });
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  require(in.take(4) == std::string_view(kMagic, 4), ErrorCode::kFormat, "not a NEO1 checkpoint");
  require(in.u32() == kCheckpointVersion, ErrorCode::kFormat, "unsupported checkpoint version");
  ModelShape shape;
  shape.layers = static_cast<int>(in.u32());
  shape.d_model = static_cast<int>(in.u32());
  shape.heads = static_cast<int>(in.u32());
  shape.context = static_cast<int>(in.u32());
  shape.vocab_size = static_cast<int>(in.u32());
  shape.base_size = static_cast<int>(in.u32());
  Checkpoint ck;
  ck.vocab_path = std::string(in.take(in.u32()));
  ck.params = ModelParams<float>::allocate(shape);
  ck.params.visit([&](std::string_view, Matrix<float>& m) {
    const auto raw = in.take(static_cast<std::size_t>(m.size()) * sizeof(float));
    std::memcpy(m.data(), raw.data(), raw.size());
  });
  require(in.done(), ErrorCode::kFormat, "checkpoint has trailing bytes");
  bool finite = true;
  ck.params.visit([&](std::string_view, const Matrix<float>& m) { finite &= m.allFinite(); });
  require(finite, ErrorCode::kFormat, "checkpoint contains non-finite values");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     std::string_view vocab_path) {
  write_file(path, serialize_checkpoint(params, vocab_path));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

#define NEO_INSTANTIATE(T)                                                                    \
  template struct ModelParams<T>;                                                             \
  template void forward<T>(const ModelParams<T>&, const PackedBatch&, ForwardState<T>&,       \
                           std::vector<int>);                                                 \
  template void backward<T>(const ModelParams<T>&, const ForwardState<T>&, const Matrix<T>&,  \
                            ModelParams<T>*, Matrix<T>*);                                     \
  template Matrix<T> log_softmax_rows<T>(const Matrix<T>&);                                   \
  template std::vector<T> next_token_logits<T>(const ModelParams<T>&, std::span<const TokenId>); \
  template double sequence_logprob<T>(const ModelParams<T>&, std::span<const TokenId>,        \
                                      std::span<const TokenId>);                              \
  template TokenSeq sample<T>(const ModelParams<T>&, std::span<const TokenId>, const SampleOptions&);

NEO_INSTANTIATE(float)
NEO_INSTANTIATE(double)

#undef NEO_INSTANTIATE

}  // namespace neo
