// SPDX-License-Identifier: Apache-2.0
#include "stpotr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "stpotr/error.hpp"

namespace stpotr {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(numel_of(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int n = static_cast<int>(ndim());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != ndim()) throw ShapeError("at(): index rank does not match " + shape_str(shape()));
  std::size_t offset = 0;
  std::size_t i = 0;
  for (std::size_t idx : index) {
    if (idx >= impl_->shape[i]) throw ShapeError("at(): index out of range for " + shape_str(shape()));
    offset = offset * impl_->shape[i] + idx;
    ++i;
  }
  return impl_->data[offset];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

void Tensor::backward() const { stpotr::backward(*this); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> data, const std::string& op,
                   std::vector<Tensor> inputs, BackwardFn backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled) {
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
      impl->requires_grad = true;
      auto node = std::make_shared<GradNode>();
      node->op = op;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.impl());
      node->backward = std::move(backward_fn);
      impl->node = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw UsageError("backward() requires a scalar root, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<TensorImpl*> order;
  std::unordered_map<TensorImpl*, bool> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  visited[root.impl().get()] = true;
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const std::size_t n_inputs = impl->node ? impl->node->inputs.size() : 0;
    if (next < n_inputs) {
      TensorImpl* child = impl->node->inputs[next++].get();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(impl);
      stack.pop_back();
    }
  }

  std::unordered_map<TensorImpl*, std::vector<double>> grads;
  grads[root.impl().get()] = std::vector<double>(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    auto found = grads.find(impl);
    if (found == grads.end()) continue;
    std::vector<double>& g = found->second;
    if (impl->node) {
      std::vector<std::vector<double>*> slots(impl->node->inputs.size(), nullptr);
      for (std::size_t i = 0; i < slots.size(); ++i) {
        TensorImpl* in = impl->node->inputs[i].get();
        if (!in->requires_grad) continue;
        auto& buf = grads[in];
        if (buf.empty()) buf.assign(in->data.size(), 0.0);
        slots[i] = &buf;
      }
      impl->node->backward(g, slots);
      impl->grad = std::move(g);
    } else {
      if (impl->grad.empty()) {
        impl->grad = g;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
      }
    }
  }
}

}  // namespace stpotr
