// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "stpotr/error.hpp"
#include "stpotr/nn.hpp"

namespace stpotr::nn {

Tensor ForwardContext::drop(const Tensor& x) const {
  if (!training || dropout_p == 0.0) return x;
  if (!rng) throw UsageError("training-mode dropout needs a random source");
  return dropout(x, dropout_p, true, *rng);
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = rng.uniform(-a, a);
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros({out}, true)) {}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = Tensor::zeros({in, out}, true);
  l.bias = Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t d, double eps_)
    : gain(Tensor::full({d}, 1.0, true)), bias(Tensor::zeros({d}, true)), eps(eps_) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            const AttentionWeights& w, std::size_t n_heads) {
  if (query.ndim() == 2) {
    auto lift = [](const Tensor& t) { return reshape(t, {1, t.dim(0), t.dim(1)}); };
    Tensor out = multi_head_attention(lift(query), lift(key), lift(value), w, n_heads);
    return reshape(out, {query.dim(0), query.dim(1)});
  }
  if (query.ndim() != 3 || key.ndim() != 3 || value.ndim() != 3) {
    throw ShapeError("attention: expected [B,T,d] inputs, got " + shape_str(query.shape()) + ", " +
                     shape_str(key.shape()) + ", " + shape_str(value.shape()));
  }
  const std::size_t batch = query.dim(0), t_q = query.dim(1), t_k = key.dim(1);
  const std::size_t d = w.query.weight.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("attention: model dim " + std::to_string(d) + " not divisible by " + std::to_string(n_heads) +
                     " heads");
  }
  if (value.dim(1) != t_k || key.dim(0) != batch || value.dim(0) != batch) {
    throw ShapeError("attention: key/value shapes " + shape_str(key.shape()) + ", " + shape_str(value.shape()) +
                     " disagree with query " + shape_str(query.shape()));
  }
  const std::size_t dk = d / n_heads;
  Tensor q = permute(reshape(w.query(query), {batch, t_q, n_heads, dk}), {0, 2, 1, 3});  // [B,H,Tq,dk]
  Tensor kt = permute(reshape(w.key(key), {batch, t_k, n_heads, dk}), {0, 2, 3, 1});     // [B,H,dk,Tk]
  Tensor v = permute(reshape(w.value(value), {batch, t_k, n_heads, dk}), {0, 2, 1, 3});  // [B,H,Tk,dk]
  Tensor scores = mul_scalar(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor context = matmul(softmax(scores, -1), v);                                       // [B,H,Tq,dk]
  Tensor merged = reshape(permute(context, {0, 2, 1, 3}), {batch, t_q, d});
  return w.output(merged);
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng) : n_heads(heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw UsageError("attention: model dim " + std::to_string(d_model) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  weights.query = Linear(d_model, d_model, rng);
  weights.key = Linear(d_model, d_model, rng);
  weights.value = Linear(d_model, d_model, rng);
  weights.output = Linear(d_model, d_model, rng);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  weights.query.collect(prefix + ".query", out);
  weights.key.collect(prefix + ".key", out);
  weights.value.collect(prefix + ".value", out);
  weights.output.collect(prefix + ".output", out);
}

FeedForward::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng)
    : up(d_model, d_ff, rng), down(d_ff, d_model, rng) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  return down(ctx.drop(relu(up(x))));
}

void FeedForward::collect(const std::string& prefix, ParameterList& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

GraphConv::GraphConv(Tensor adj, std::size_t f_in, std::size_t f_out, bool relu_act, Rng& rng)
    : adjacency(std::move(adj)), transform(f_in, f_out, rng), relu_activation(relu_act) {
  if (adjacency.ndim() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
    throw ShapeError("graph conv: adjacency must be square, got " + shape_str(adjacency.shape()));
  }
  adjacency.set_requires_grad(true);
}

Tensor GraphConv::operator()(const Tensor& x) const {
  if (x.ndim() < 2 || x.dim(-2) != adjacency.dim(0)) {
    throw ShapeError("graph conv: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(adjacency.dim(0)) + " nodes on axis -2");
  }
  Tensor out = transform(matmul(adjacency, x));
  return relu_activation ? relu(out) : out;
}

void GraphConv::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".adjacency", adjacency});
  transform.collect(prefix + ".transform", out);
}

EncoderLayer::EncoderLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, bool pre, Rng& rng)
    : self_attn(d_model, n_heads, rng), ff(d_model, d_ff, rng), norm1(d_model), norm2(d_model), pre_norm(pre) {}

Tensor EncoderLayer::operator()(const Tensor& x, const ForwardContext& ctx) const {
  if (pre_norm) {
    Tensor h = norm1(x);
    Tensor y = add(x, ctx.drop(self_attn(h, h, h)));
    return add(y, ctx.drop(ff(norm2(y), ctx)));
  }
  Tensor y = norm1(add(x, ctx.drop(self_attn(x, x, x))));
  return norm2(add(y, ctx.drop(ff(y, ctx))));
}

void EncoderLayer::collect(const std::string& prefix, ParameterList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  ff.collect(prefix + ".ff", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
}

DecoderLayer::DecoderLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff, bool pre, Rng& rng)
    : self_attn(d_model, n_heads, rng),
      cross_attn(d_model, n_heads, rng),
      ff(d_model, d_ff, rng),
      norm1(d_model),
      norm2(d_model),
      norm3(d_model),
      pre_norm(pre) {}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor& memory, const ForwardContext& ctx) const {
  if (pre_norm) {
    Tensor h = norm1(x);
    Tensor y = add(x, ctx.drop(self_attn(h, h, h)));
    y = add(y, ctx.drop(cross_attn(norm2(y), memory, memory)));
    return add(y, ctx.drop(ff(norm3(y), ctx)));
  }
  Tensor y = norm1(add(x, ctx.drop(self_attn(x, x, x))));
  y = norm2(add(y, ctx.drop(cross_attn(y, memory, memory))));
  return norm3(add(y, ctx.drop(ff(y, ctx))));
}

void DecoderLayer::collect(const std::string& prefix, ParameterList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  ff.collect(prefix + ".ff", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  norm3.collect(prefix + ".norm3", out);
}

Tensor positional_encoding(std::size_t length, std::size_t d, std::size_t offset) {
  std::vector<double> table(length * d);
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(t + offset);
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      table[t * d + i] = std::sin(pos * freq);
      if (i + 1 < d) table[t * d + i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor::from({length, d}, std::move(table));
}

}  // namespace stpotr::nn
