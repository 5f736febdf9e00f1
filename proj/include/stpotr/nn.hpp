// SPDX-License-Identifier: Apache-2.0
//
// Transformer and graph-convolution building blocks over stpotr::Tensor.
// Layers own parameter handles; `collect` appends them under a dotted prefix
// so checkpoints and optimizers see a stable, named ordering.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stpotr/tensor.hpp"

namespace stpotr::nn {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

/// Mode and randomness for one forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  double dropout_p = 0.0;

  Tensor drop(const Tensor& x) const;
};

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t d, double eps = 1e-5);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor gain;
  Tensor bias;
  double eps = 1e-5;
};

/// Projection weights of one multi-head attention block.
struct AttentionWeights {
  Linear query, key, value, output;
};

/// Scaled dot-product attention split across `n_heads` heads, no masking.
/// Inputs are [B, T, d] (or [T, d]); output matches the query's shape.
Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            const AttentionWeights& weights, std::size_t n_heads);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng);

  Tensor operator()(const Tensor& query, const Tensor& key, const Tensor& value) const {
    return multi_head_attention(query, key, value, weights, n_heads);
  }
  void collect(const std::string& prefix, ParameterList& out) const;

  AttentionWeights weights;
  std::size_t n_heads = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng);

  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear up, down;
};

/// One graph convolution over a J-node graph with learnable adjacency:
/// out = act(A · x · W + b), x of shape [..., J, F_in].
class GraphConv {
 public:
  GraphConv() = default;
  GraphConv(Tensor adjacency, std::size_t f_in, std::size_t f_out, bool relu_activation, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor adjacency;  // [J, J]
  Linear transform;  // F_in -> F_out
  bool relu_activation = true;
};

class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, bool pre_norm, Rng& rng);

  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  MultiHeadAttention self_attn;
  FeedForward ff;
  LayerNorm norm1, norm2;
  bool pre_norm = true;
};

class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, bool pre_norm, Rng& rng);

  Tensor operator()(const Tensor& x, const Tensor& memory, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
  LayerNorm norm1, norm2, norm3;
  bool pre_norm = true;
};

/// Sinusoidal encodings for positions [offset, offset + length), shape [length, d].
Tensor positional_encoding(std::size_t length, std::size_t d, std::size_t offset = 0);

}  // namespace stpotr::nn
