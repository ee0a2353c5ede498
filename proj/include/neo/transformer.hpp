#pragma once

// Forward and reverse passes of the decoder over a packed batch of
// independent sequences. Shared by inference, neologism training and
// pretraining.

#include <span>
#include <vector>

#include "neo/model.hpp"

namespace neo {

// Sequences laid end to end. Sequence s occupies rows [starts[s], starts[s+1]).
struct PackedBatch {
  TokenSeq ids;
  std::vector<int> starts{0};

  void add(std::span<const TokenId> seq);
  int rows() const { return static_cast<int>(ids.size()); }
  int sequences() const { return static_cast<int>(starts.size()) - 1; }
};

template <typename T>
struct LayerCache {
  Matrix<T> ln1_hat, ln1_out;  // normalized input, affine output
  std::vector<T> ln1_rstd;
  Matrix<T> qkv;
  std::vector<Matrix<T>> probs;  // [sequence * heads + head] -> [len, len]
  Matrix<T> attn;                // heads concatenated, before projection
  Matrix<T> ln2_hat, ln2_out;
  std::vector<T> ln2_rstd;
  Matrix<T> fc_pre, fc_act;
};

template <typename T>
struct ForwardState {
  PackedBatch batch;
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_hat, final_out;
  std::vector<T> final_rstd;
  // logits.row(r) predicts the token after batch row logit_rows[r].
  std::vector<int> logit_rows;
  Matrix<T> logits;  // over base ids only
};

// Runs the decoder. logit_rows selects which batch rows get output logits;
// empty means every row.
template <typename T>
void forward(const ModelParams<T>& params, const PackedBatch& batch, ForwardState<T>& state,
             std::vector<int> logit_rows = {});

// Back-propagates dlogits (same shape as state.logits). Parameter gradients
// are accumulated into param_grads when non-null; the gradient with respect
// to each row's input vector (token + position embedding) is written to
// d_input when non-null.
template <typename T>
void backward(const ModelParams<T>& params, const ForwardState<T>& state,
              const Matrix<T>& dlogits, ModelParams<T>* param_grads, Matrix<T>* d_input);

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits);

}  // namespace neo
