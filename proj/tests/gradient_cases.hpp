// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient cases shared by the unit tests and the
// acceptance binary. Each case returns the worst relative error.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "stpotr/model.hpp"
#include "stpotr/nn.hpp"
#include "stpotr/tensor.hpp"
#include "stpotr/train.hpp"

namespace gradcases {

using namespace stpotr;
using oracle::random_tensor;
using oracle::weighted_sum;

struct GradCase {
  std::string name;
  std::function<double()> run;
};

// Values kept away from the kinks of relu and abs.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from(std::move(shape), std::move(v), true);
}

inline double check_unary(const std::function<Tensor(const Tensor&)>& f, Tensor x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor probe = f(x.detach());
  Tensor w = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
  return oracle::gradient_check([&] { return weighted_sum(f(x), w); }, {x});
}

inline double check_binary(const std::function<Tensor(const Tensor&, const Tensor&)>& f, Tensor a, Tensor b,
                           std::uint64_t seed) {
  Rng rng(seed);
  Tensor probe = f(a.detach(), b.detach());
  Tensor w = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
  return oracle::gradient_check([&] { return weighted_sum(f(a, b), w); }, {a, b});
}

/// Gradient of the training loss with respect to a sample of every parameter.
inline double check_model(ModelConfig cfg, std::uint64_t seed, std::size_t per_tensor = 6,
                          LossKind loss_kind = LossKind::kL1) {
  cfg.dropout = 0.0;
  cfg.seed = seed;
  StpotrModel model(cfg);
  Rng rng(seed + 1);
  // Zero-initialised heads block gradient flow; randomise them for the check.
  auto params = model.parameters();
  for (auto& p : params) {
    if (p.name.rfind("pose_head.out", 0) == 0 || p.name.rfind("traj_head.out", 0) == 0) {
      for (double& v : p.tensor.mutable_data()) v = rng.uniform(-0.3, 0.3);
    }
  }
  const std::size_t b = 2;
  Tensor pose = random_tensor({b, cfg.input_frames, kPoseDim}, rng, -0.5, 0.5, false);
  Tensor traj = random_tensor({b, cfg.input_frames, kTrajDim}, rng, -2.0, 2.0, false);
  Tensor target_pose = random_tensor({b, cfg.target_frames, kPoseDim}, rng, -0.5, 0.5, false);
  Tensor target_traj = random_tensor({b, cfg.target_frames, kTrajDim}, rng, -2.0, 2.0, false);
  auto loss = [&] {
    auto pred = model.forward(pose, traj);
    return motion_loss(pred.pose, pred.traj, target_pose, target_traj, {}, loss_kind);
  };
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> indices;
  for (const auto& p : params) {
    inputs.push_back(p.tensor);
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < std::min(per_tensor, p.tensor.numel()); ++k)
      idx.push_back(static_cast<std::size_t>(rng.next() % p.tensor.numel()));
    indices.push_back(idx);
  }
  return oracle::gradient_check(loss, inputs, 1e-5, indices);
}

inline std::vector<GradCase> all_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<double()> f) { cases.push_back({std::move(name), std::move(f)}); };

  add_case("add (broadcast)", [] {
    Rng r(1);
    return check_binary([](auto& a, auto& b) { return add(a, b); }, random_tensor({2, 3, 4}, r),
                        random_tensor({3, 1}, r), 11);
  });
  add_case("sub (broadcast)", [] {
    Rng r(2);
    return check_binary([](auto& a, auto& b) { return sub(a, b); }, random_tensor({4}, r),
                        random_tensor({2, 3, 4}, r), 12);
  });
  add_case("mul (broadcast)", [] {
    Rng r(3);
    return check_binary([](auto& a, auto& b) { return mul(a, b); }, random_tensor({2, 1, 4}, r),
                        random_tensor({3, 4}, r), 13);
  });
  add_case("add_scalar", [] {
    Rng r(4);
    return check_unary([](auto& x) { return add_scalar(x, 0.7); }, random_tensor({3, 5}, r), 14);
  });
  add_case("mul_scalar", [] {
    Rng r(5);
    return check_unary([](auto& x) { return mul_scalar(x, -1.3); }, random_tensor({3, 5}, r), 15);
  });
  add_case("neg", [] {
    Rng r(6);
    return check_unary([](auto& x) { return neg(x); }, random_tensor({7}, r), 16);
  });
  add_case("relu", [] {
    Rng r(7);
    return check_unary([](auto& x) { return relu(x); }, away_from_zero({4, 6}, r), 17);
  });
  add_case("abs", [] {
    Rng r(8);
    return check_unary([](auto& x) { return stpotr::abs(x); }, away_from_zero({4, 6}, r), 18);
  });
  add_case("matmul", [] {
    Rng r(9);
    return check_binary([](auto& a, auto& b) { return matmul(a, b); }, random_tensor({3, 4}, r),
                        random_tensor({4, 2}, r), 19);
  });
  add_case("matmul (batched, shared right)", [] {
    Rng r(10);
    return check_binary([](auto& a, auto& b) { return matmul(a, b); }, random_tensor({2, 3, 4}, r),
                        random_tensor({4, 5}, r), 20);
  });
  add_case("matmul (broadcast batch)", [] {
    Rng r(11);
    return check_binary([](auto& a, auto& b) { return matmul(a, b); }, random_tensor({2, 1, 3, 4}, r),
                        random_tensor({3, 4, 2}, r), 21);
  });
  add_case("softmax (last axis)", [] {
    Rng r(12);
    return check_unary([](auto& x) { return softmax(x, -1); }, random_tensor({3, 5}, r, -2.0, 2.0), 22);
  });
  add_case("softmax (axis 0)", [] {
    Rng r(13);
    return check_unary([](auto& x) { return softmax(x, 0); }, random_tensor({4, 3}, r, -2.0, 2.0), 23);
  });
  add_case("layer_norm", [] {
    Rng r(14);
    Tensor x = random_tensor({3, 6}, r), g = random_tensor({6}, r, 0.5, 1.5), b = random_tensor({6}, r);
    Tensor w = random_tensor({3, 6}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return weighted_sum(layer_norm(x, g, b), w); }, {x, g, b});
  });
  add_case("reshape", [] {
    Rng r(15);
    return check_unary([](auto& x) { return reshape(x, {6, 2}); }, random_tensor({3, 4}, r), 24);
  });
  add_case("permute", [] {
    Rng r(16);
    return check_unary([](auto& x) { return permute(x, {2, 0, 1}); }, random_tensor({2, 3, 4}, r), 25);
  });
  add_case("transpose", [] {
    Rng r(17);
    return check_unary([](auto& x) { return transpose(x, 0, 2); }, random_tensor({2, 3, 4}, r), 26);
  });
  add_case("concat", [] {
    Rng r(18);
    return check_binary([](auto& a, auto& b) { return concat({a, b, a}, 1); }, random_tensor({2, 3, 2}, r),
                        random_tensor({2, 1, 2}, r), 27);
  });
  add_case("slice", [] {
    Rng r(19);
    return check_unary([](auto& x) { return slice(x, 1, 1, 3); }, random_tensor({2, 4, 3}, r), 28);
  });
  add_case("broadcast_to", [] {
    Rng r(20);
    return check_unary([](auto& x) { return broadcast_to(x, {3, 2, 4}); }, random_tensor({2, 1}, r), 29);
  });
  add_case("sum", [] {
    Rng r(21);
    Tensor x = random_tensor({3, 4}, r);
    return oracle::gradient_check([&] { return sum(mul(x, x)); }, {x});
  });
  add_case("mean", [] {
    Rng r(22);
    Tensor x = random_tensor({3, 4}, r);
    return oracle::gradient_check([&] { return mean(mul(x, x)); }, {x});
  });
  add_case("dropout (fixed mask)", [] {
    Rng r(23);
    return check_unary(
        [](auto& x) {
          Rng mask(99);
          return dropout(x, 0.3, true, mask);
        },
        random_tensor({5, 6}, r), 30);
  });
  add_case("linear", [] {
    Rng r(24);
    Tensor x = random_tensor({2, 3, 4}, r), w = random_tensor({4, 5}, r), b = random_tensor({5}, r);
    Tensor probe = random_tensor({2, 3, 5}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return weighted_sum(linear(x, w, b), probe); }, {x, w, b});
  });
  add_case("multi-head attention", [] {
    Rng r(25);
    nn::MultiHeadAttention mha(8, 2, r);
    Tensor q = random_tensor({2, 3, 8}, r), kv = random_tensor({2, 4, 8}, r);
    Tensor probe = random_tensor({2, 3, 8}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return weighted_sum(mha(q, kv, kv), probe); },
                                  {q, kv, mha.weights.query.weight, mha.weights.output.bias});
  });
  add_case("graph conv", [] {
    Rng r(26);
    nn::GraphConv gc(random_tensor({4, 4}, r), 3, 5, false, r);
    Tensor x = random_tensor({2, 4, 3}, r);
    Tensor probe = random_tensor({2, 4, 5}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return weighted_sum(gc(x), probe); }, {x, gc.adjacency, gc.transform.weight});
  });
  add_case("motion loss (L1)", [] {
    Rng r(27);
    Tensor pp = random_tensor({2, 4, 48}, r), pt = random_tensor({2, 4, 3}, r);
    Tensor tp = random_tensor({2, 4, 48}, r, -1.0, 1.0, false), tt = random_tensor({2, 4, 3}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return motion_loss(pp, pt, tp, tt, {0.7, 1.3}); }, {pp, pt});
  });
  add_case("motion loss (L2)", [] {
    Rng r(28);
    Tensor pp = random_tensor({2, 4, 48}, r), pt = random_tensor({2, 4, 3}, r);
    Tensor tp = random_tensor({2, 4, 48}, r, -1.0, 1.0, false), tt = random_tensor({2, 4, 3}, r, -1.0, 1.0, false);
    return oracle::gradient_check([&] { return motion_loss(pp, pt, tp, tt, {}, LossKind::kL2); }, {pp, pt});
  });
  add_case("tiny model", [] { return check_model(ModelConfig::tiny(), 31); });
  add_case("tiny model, squared loss", [] { return check_model(ModelConfig::tiny(), 31, 6, LossKind::kL2); });
  add_case("tiny model, post-norm", [] {
    auto c = ModelConfig::tiny();
    c.pre_normalized = false;
    return check_model(c, 32);
  });
  add_case("tiny model, pose-side shared attention", [] {
    auto c = ModelConfig::tiny();
    c.shared_attention_pose_side = true;
    return check_model(c, 33);
  });
  add_case("tiny model, no shared / no end attention", [] {
    auto c = ModelConfig::tiny();
    c.use_shared_attention = false;
    c.use_end_attention = false;
    return check_model(c, 34);
  });
  return cases;
}

}  // namespace gradcases
