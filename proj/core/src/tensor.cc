// Copyright 2026 The subllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "subllm/tensor.h"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "subllm/errors.h"

namespace subllm {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_to_string(shape));
    n *= e;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_sequence{0};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {
std::uint64_t next_sequence_number() { return ++g_sequence; }
}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data,
                               bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = detail::next_sequence_number();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> data,
                                 const std::vector<Tensor>& inputs,
                                 BackwardFn backward) {
  Tensor out = from_data(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
    return t.defined() && t.requires_grad();
  });
  if (!any) return out;
  auto& node = *out.node_;
  node.requires_grad = true;
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) node.inputs.push_back(t.node_);
  }
  node.backward = std::move(backward);
  return out;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
int Tensor<T>::rank() const {
  return static_cast<int>(node_->shape.size());
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  return static_cast<std::int64_t>(node_->data.size());
}

template <typename T>
std::span<T> Tensor<T>::data() {
  return node_->data;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->data.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (node_->backward) throw Error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = value;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !node_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> g) const {
  if (!node_->requires_grad) return;
  if (g.size() != node_->data.size()) {
    throw DimensionError("gradient length mismatch for " + shape_to_string(shape()));
  }
  auto dst = mutable_grad();
  for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename T>
void Tensor<T>::zero_grad() const {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw DimensionError("backward() without seed requires a scalar, got " +
                         shape_to_string(shape()));
  }
  const T one(1);
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void Tensor<T>::backward(std::span<const T> seed) {
  if (!node_->requires_grad) return;
  // Collect every node reachable through recorded inputs.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  // Creation order is a topological order of the DAG.
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->seq > b->seq; });

  accumulate_grad(seed);
  for (auto* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(n->grad);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace subllm
