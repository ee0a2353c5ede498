#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neo/common.hpp"

namespace neo {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Hyperparameters of the decoder. vocab_size counts base tokens plus
// neologisms; the output head only covers the first base_size ids.
struct ModelShape {
  int layers = 4;
  int d_model = 128;
  int heads = 4;
  int context = 256;
  int vocab_size = 0;
  int base_size = 0;

  int d_ff() const { return 4 * d_model; }
  int head_dim() const { return d_model / heads; }
  void validate() const;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

template <typename T>
struct LayerWeights {
  Matrix<T> ln1_gain, ln1_bias;        // [1, d]
  Matrix<T> attn_w, attn_b;            // [d, 3d], [1, 3d]  (q | k | v)
  Matrix<T> attn_proj_w, attn_proj_b;  // [d, d], [1, d]
  Matrix<T> ln2_gain, ln2_bias;        // [1, d]
  Matrix<T> fc_w, fc_b;                // [d, 4d], [1, 4d]
  Matrix<T> proj_w, proj_b;            // [4d, d], [1, d]
};

// All weights of the pre-norm decoder. Rows of token_embedding at ids
// >= shape.base_size are neologism rows: the only trainable entries. Every
// other tensor (and every base row) is frozen.
template <typename T>
struct ModelParams {
  ModelShape shape;
  Matrix<T> token_embedding;     // [vocab_size, d]
  Matrix<T> position_embedding;  // [context, d]
  std::vector<LayerWeights<T>> layers;
  Matrix<T> final_gain, final_bias;  // [1, d]
  Matrix<T> output_w;                // [d, base_size]
  Matrix<T> output_b;                // [1, base_size]

  // Every tensor zero, including layer-norm gains. Used for gradients.
  static ModelParams allocate(const ModelShape& shape);
  // Zero weights with unit layer-norm gains: emits uniform distributions.
  static ModelParams zeros(const ModelShape& shape);
  static ModelParams random(const ModelShape& shape, std::uint64_t seed);

  bool is_trainable_row(TokenId id) const { return id >= shape.base_size && id < shape.vocab_size; }

  // Appends zero-initialized neologism rows to the embedding.
  ModelParams with_neologism_rows(int count) const;

  template <typename U>
  ModelParams<U> cast() const;

  // Visits tensors in checkpoint order as f(name, matrix).
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  std::size_t parameter_count() const;
};

template <typename T>
template <typename F>
void ModelParams<T>::visit(F&& f) {
  f(std::string_view("token_embedding"), token_embedding);
  f(std::string_view("position_embedding"), position_embedding);
  for (auto& l : layers) {
    f(std::string_view("ln1_gain"), l.ln1_gain);
    f(std::string_view("ln1_bias"), l.ln1_bias);
    f(std::string_view("attn_w"), l.attn_w);
    f(std::string_view("attn_b"), l.attn_b);
    f(std::string_view("attn_proj_w"), l.attn_proj_w);
    f(std::string_view("attn_proj_b"), l.attn_proj_b);
    f(std::string_view("ln2_gain"), l.ln2_gain);
    f(std::string_view("ln2_bias"), l.ln2_bias);
    f(std::string_view("fc_w"), l.fc_w);
    f(std::string_view("fc_b"), l.fc_b);
    f(std::string_view("proj_w"), l.proj_w);
    f(std::string_view("proj_b"), l.proj_b);
  }
  f(std::string_view("final_gain"), final_gain);
  f(std::string_view("final_bias"), final_bias);
  f(std::string_view("output_w"), output_w);
  f(std::string_view("output_b"), output_b);
}

template <typename T>
template <typename F>
void ModelParams<T>::visit(F&& f) const {
  const_cast<ModelParams<T>*>(this)->visit([&](std::string_view name, Matrix<T>& m) {
    f(name, static_cast<const Matrix<T>&>(m));
  });
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.shape = shape;
  out.token_embedding = token_embedding.template cast<U>();
  out.position_embedding = position_embedding.template cast<U>();
  out.layers.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    auto& b = out.layers[i];
    b.ln1_gain = a.ln1_gain.template cast<U>();
    b.ln1_bias = a.ln1_bias.template cast<U>();
    b.attn_w = a.attn_w.template cast<U>();
    b.attn_b = a.attn_b.template cast<U>();
    b.attn_proj_w = a.attn_proj_w.template cast<U>();
    b.attn_proj_b = a.attn_proj_b.template cast<U>();
    b.ln2_gain = a.ln2_gain.template cast<U>();
    b.ln2_bias = a.ln2_bias.template cast<U>();
    b.fc_w = a.fc_w.template cast<U>();
    b.fc_b = a.fc_b.template cast<U>();
    b.proj_w = a.proj_w.template cast<U>();
    b.proj_b = a.proj_b.template cast<U>();
  }
  out.final_gain = final_gain.template cast<U>();
  out.final_bias = final_bias.template cast<U>();
  out.output_w = output_w.template cast<U>();
  out.output_b = output_b.template cast<U>();
  return out;
}

// Immutable copy of the parameters taken after the neologism row has been
// initialized and before any optimizer step.
template <typename T>
class ReferenceSnapshot {
 public:
  explicit ReferenceSnapshot(const ModelParams<T>& params)
      : params_(std::make_shared<const ModelParams<T>>(params)) {}

  const ModelParams<T>& params() const { return *params_; }

 private:
  std::shared_ptr<const ModelParams<T>> params_;
};

template <typename T>
ReferenceSnapshot<T> snapshot_reference(const ModelParams<T>& params) {
  return ReferenceSnapshot<T>(params);
}

// Logits over all vocab_size ids for the token following `prefix`.
// Neologism ids are always -inf. prefix must start with BOS.
template <typename T>
std::vector<T> next_token_logits(const ModelParams<T>& params, std::span<const TokenId> prefix);

// log p(response | prompt), summed over response tokens.
template <typename T>
double sequence_logprob(const ModelParams<T>& params, std::span<const TokenId> prompt,
                        std::span<const TokenId> response);

struct SampleOptions {
  int max_tokens = 64;
  double temperature = 1.0;
  bool greedy = false;  // argmax decoding, the temperature -> 0 limit
  std::uint64_t seed = 0;
};

// Generated tokens, excluding the terminating EOS. Never contains a
// neologism id.
template <typename T>
TokenSeq sample(const ModelParams<T>& params, std::span<const TokenId> prompt,
                const SampleOptions& options);

// Checkpoint: "NEO1" magic, little-endian u32 header (version, layers,
// d_model, heads, context, vocab_size, base_size, vocab path length), the
// vocabulary path bytes, then every tensor as f32 in ModelParams::visit order.
struct Checkpoint {
  ModelParams<float> params;
  std::string vocab_path;  // relative to the checkpoint's directory
};

std::string serialize_checkpoint(const ModelParams<float>& params, std::string_view vocab_path);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     std::string_view vocab_path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace neo
