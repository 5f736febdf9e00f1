// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "stpotr/error.hpp"
#include "stpotr/nn.hpp"

using namespace stpotr;
using oracle::Matrix;

namespace {

double max_abs_diff(const Tensor& t, const Matrix& m, std::size_t batch) {
  const std::size_t cols = t.dim(-1);
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j)
      worst = std::max(worst, std::abs(t.data()[(batch * m.size() + i) * cols + j] - m[i][j]));
  return worst;
}

}  // namespace

TEST_CASE("multi-head attention matches the per-head loop reference") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads = 1 + rng.next() % 4;
    const std::size_t d = heads * (1 + rng.next() % 4);
    const std::size_t tq = 1 + rng.next() % 6, tk = 1 + rng.next() % 6, b = 1 + rng.next() % 3;
    nn::MultiHeadAttention mha(d, heads, rng);
    for (auto* lin : {&mha.weights.query, &mha.weights.key, &mha.weights.value, &mha.weights.output})
      for (double& v : lin->bias.mutable_data()) v = rng.uniform(-0.5, 0.5);
    Tensor q = oracle::random_tensor({b, tq, d}, rng, -2, 2, false);
    Tensor k = oracle::random_tensor({b, tk, d}, rng, -2, 2, false);
    Tensor v = oracle::random_tensor({b, tk, d}, rng, -2, 2, false);
    Tensor out = mha(q, k, v);
    REQUIRE(out.shape() == Shape{b, tq, d});
    for (std::size_t i = 0; i < b; ++i) {
      Matrix ref = oracle::naive_attention(oracle::rows_of(q, i), oracle::rows_of(k, i), oracle::rows_of(v, i),
                                           mha.weights, heads);
      CHECK(max_abs_diff(out, ref, i) < 1e-10);
    }
  }
}

TEST_CASE("attention accepts unbatched input") {
  Rng rng(1);
  nn::MultiHeadAttention mha(6, 3, rng);
  Tensor q = oracle::random_tensor({4, 6}, rng, -1, 1, false);
  Tensor batched = mha(reshape(q, {1, 4, 6}), reshape(q, {1, 4, 6}), reshape(q, {1, 4, 6}));
  Tensor flat = mha(q, q, q);
  CHECK(flat.shape() == Shape{4, 6});
  CHECK(std::equal(flat.data().begin(), flat.data().end(), batched.data().begin()));
}

TEST_CASE("attention over a single key returns the projected value") {
  Rng rng(3);
  nn::MultiHeadAttention mha(4, 2, rng);
  Tensor q = oracle::random_tensor({1, 5, 4}, rng, -1, 1, false);
  Tensor kv = oracle::random_tensor({1, 1, 4}, rng, -1, 1, false);
  Tensor out = mha(q, kv, kv);
  Matrix projected = oracle::affine(oracle::affine(oracle::rows_of(kv, 0), mha.weights.value), mha.weights.output);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.at({0, t, c}) == doctest::Approx(projected[0][c]).epsilon(1e-13));
}

TEST_CASE("attention is invariant to the order of key/value pairs") {
  Rng rng(4);
  nn::MultiHeadAttention mha(4, 2, rng);
  Tensor q = oracle::random_tensor({1, 3, 4}, rng, -1, 1, false);
  Tensor k = oracle::random_tensor({1, 5, 4}, rng, -1, 1, false);
  Tensor v = oracle::random_tensor({1, 5, 4}, rng, -1, 1, false);
  auto reversed = [](const Tensor& t) {
    std::vector<Tensor> rows;
    for (std::size_t i = t.dim(1); i-- > 0;) rows.push_back(slice(t, 1, i, i + 1));
    return concat(rows, 1);
  };
  Tensor a = mha(q, k, v), b = mha(q, reversed(k), reversed(v));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("attention rejects widths not divisible by the head count") {
  Rng rng(5);
  CHECK_THROWS_AS(nn::MultiHeadAttention(6, 4, rng), UsageError);
}

TEST_CASE("graph conv with identity adjacency and weights is the identity") {
  Rng rng(6);
  nn::GraphConv gc(Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), 2, 2, false, rng);
  gc.transform.weight = Tensor::from({2, 2}, {1, 0, 0, 1});
  gc.transform.bias = Tensor::zeros({2});
  Tensor x = oracle::random_tensor({3, 2}, rng, -1, 1, false);
  Tensor y = gc(x);
  CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST_CASE("graph conv over one node is a per-frame linear layer") {
  Rng rng(7);
  nn::GraphConv gc(Tensor::full({1, 1}, 1.0), 3, 4, false, rng);
  Tensor x = oracle::random_tensor({5, 1, 3}, rng, -1, 1, false);
  Tensor y = gc(x);
  Tensor ref = gc.transform(reshape(x, {5, 3}));
  CHECK(std::equal(y.data().begin(), y.data().end(), ref.data().begin()));
}

TEST_CASE("graph conv matches the double-loop aggregation") {
  Rng rng(8);
  for (bool act : {false, true}) {
    nn::GraphConv gc(oracle::random_tensor({16, 16}, rng, -0.5, 0.5, true), 3, 5, act, rng);
    for (double& v : gc.transform.bias.mutable_data()) v = rng.uniform(-0.2, 0.2);
    Tensor x = oracle::random_tensor({16, 3}, rng, -1, 1, false);
    Matrix w = oracle::rows_of(gc.transform.weight, 0);
    std::vector<double> b(gc.transform.bias.data().begin(), gc.transform.bias.data().end());
    Matrix ref = oracle::naive_graph_conv(oracle::rows_of(x, 0), oracle::rows_of(gc.adjacency, 0), w, b, act);
    CHECK(max_abs_diff(gc(x), ref, 0) < 1e-12);
  }
}

TEST_CASE("linear layers act position-wise") {
  Rng rng(9);
  nn::Linear head(6, 3, rng);
  Tensor x = oracle::random_tensor({1, 4, 6}, rng, -1, 1, false);
  Tensor y = head(x);
  Tensor x2 = x.clone();
  x2.mutable_data()[2 * 6 + 1] += 0.5;  // frame 2 only
  Tensor y2 = head(x2);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      if (t == 2) CHECK(y.at({0, t, c}) != y2.at({0, t, c}));
      else CHECK(y.at({0, t, c}) == y2.at({0, t, c}));
    }
}

TEST_CASE("positional encoding is the sinusoidal table") {
  Tensor pe = nn::positional_encoding(3, 4, 5);
  CHECK(pe.shape() == Shape{3, 4});
  CHECK(pe.at({0, 0}) == std::sin(5.0));
  CHECK(pe.at({0, 1}) == std::cos(5.0));
  CHECK(pe.at({2, 2}) == doctest::Approx(std::sin(7.0 / 100.0)).epsilon(1e-15));
  CHECK(pe.at({2, 3}) == doctest::Approx(std::cos(7.0 / 100.0)).epsilon(1e-15));
  Tensor full = nn::positional_encoding(8, 4);
  CHECK(std::equal(pe.data().begin(), pe.data().end(), slice(full, 0, 5, 8).data().begin()));
}

TEST_CASE("encoder and decoder layers keep the token shape") {
  Rng rng(10);
  for (bool pre : {true, false}) {
    nn::EncoderLayer enc(8, 2, 16, pre, rng);
    nn::DecoderLayer dec(8, 2, 16, pre, rng);
    Tensor x = oracle::random_tensor({2, 5, 8}, rng, -1, 1, false);
    Tensor q = oracle::random_tensor({2, 20, 8}, rng, -1, 1, false);
    nn::ForwardContext ctx;
    Tensor mem = enc(x, ctx);
    CHECK(mem.shape() == x.shape());
    CHECK(dec(q, mem, ctx).shape() == q.shape());
  }
}

TEST_CASE("layers register parameters under dotted names") {
  Rng rng(11);
  nn::EncoderLayer enc(8, 2, 16, true, rng);
  nn::ParameterList params;
  enc.collect("enc", params);
  std::vector<std::string> names;
  for (const auto& p : params) names.push_back(p.name);
  CHECK(std::find(names.begin(), names.end(), "enc.self_attn.query.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "enc.ff.down.bias") != names.end());
  CHECK(std::find(names.begin(), names.end(), "enc.norm2.gain") != names.end());
}
