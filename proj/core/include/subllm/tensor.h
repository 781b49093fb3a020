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

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace subllm {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Graph recording is on by default; NoGradGuard disables it for the current
// thread (inference, evaluation, optimizer updates).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor;

namespace detail {

std::uint64_t next_sequence_number();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Receives this node's gradient and accumulates into the inputs.
  std::function<void(std::span<const T>)> backward;
};

}  // namespace detail

// Dense row-major n-dimensional buffer with an optional gradient slot.
//
// Tensor is a handle: copies share the underlying node, like framework
// tensors. Every op materializes a fresh result; there are no views.
// Nodes only reference their inputs, so the recorded graph is acyclic and
// is released as soon as the last handle to the loss goes away.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(std::span<const T>)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Builds the result of a differentiable op. `backward` is recorded only
  // when grad mode is on and at least one input requires grad; it receives
  // the result's gradient and must accumulate into the inputs through
  // Tensor::accumulate_grad / mutable_grad.
  static Tensor make_result(Shape shape, std::vector<T> data,
                            const std::vector<Tensor>& inputs,
                            BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;
  int rank() const;
  std::int64_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;
  T item() const;
  T operator[](std::int64_t i) const { return data()[i]; }

  bool requires_grad() const;
  // Only valid on leaves (tensors not produced by a recorded op).
  void set_requires_grad(bool value);

  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const T> grad() const;
  // Allocates a zero-filled gradient buffer on first use.
  std::span<T> mutable_grad() const;
  void accumulate_grad(std::span<const T> g) const;
  void zero_grad() const;

  // Reverse-mode sweep from a scalar tensor (seed 1).
  void backward();
  // Reverse-mode sweep with an explicit seed gradient of this tensor's shape.
  void backward(std::span<const T> seed);

  // New leaf holding a copy of the data, disconnected from the graph.
  Tensor detach() const;

  // True when both handles refer to the same node.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace subllm
