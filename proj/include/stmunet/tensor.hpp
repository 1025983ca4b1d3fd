/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stmunet/shape.hpp"

namespace stmunet {

template <typename T>
class Tape;

namespace detail {
template <typename T>
struct TensorPayload {
  std::vector<T> value;
  std::vector<T> grad;  // empty until the tensor joins a tape
  Tape<T>* tape = nullptr;  // shared by every alias of this buffer
};
}  // namespace detail

/// Dense row-major tensor of f32 or f64. Copies are shallow: they share the
/// underlying value/grad buffers. Values are treated as immutable once the
/// tensor has been consumed by an operation; gradients accumulate in place
/// during Tape::backward.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(const Shape& shape, T fill = T(0))
      : shape_(shape),
        payload_(std::make_shared<detail::TensorPayload<T>>()) {
    payload_->value.assign(static_cast<size_t>(shape.numel()), fill);
  }

  Tensor(const Shape& shape, std::vector<T> values)
      : shape_(shape),
        payload_(std::make_shared<detail::TensorPayload<T>>()) {
    if (static_cast<int64_t>(values.size()) != shape.numel()) {
      throw std::invalid_argument("tensor data size " + std::to_string(values.size()) +
                                  " does not match shape " + shape.str());
    }
    payload_->value = std::move(values);
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape, T(0)); }
  static Tensor full(const Shape& shape, T v) { return Tensor(shape, v); }

  bool defined() const { return static_cast<bool>(payload_); }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }

  T* data() { return payload_->value.data(); }
  const T* data() const { return payload_->value.data(); }
  std::vector<T>& vec() { return payload_->value; }
  const std::vector<T>& vec() const { return payload_->value; }

  /// Scalar read; requires numel() == 1.
  T item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item() requires a scalar tensor, shape is " + shape_.str());
    }
    return payload_->value[0];
  }

  bool has_grad() const { return payload_ && !payload_->grad.empty(); }
  T* grad_data() { return payload_->grad.data(); }
  const T* grad_data() const { return payload_->grad.data(); }
  std::vector<T>& grad_vec() { return payload_->grad; }
  const std::vector<T>& grad_vec() const { return payload_->grad; }

  /// Copy of the accumulated gradient as a plain tensor.
  Tensor grad_tensor() const {
    if (!has_grad()) throw std::runtime_error("tensor has no gradient buffer");
    return Tensor(shape_, payload_->grad);
  }

  Tape<T>* tape() const { return payload_ ? payload_->tape : nullptr; }

  /// Same payload under a new shape; element count must match. Gradients,
  /// when present, are shared through the same buffer.
  Tensor reshaped(const Shape& shape) const {
    if (shape.numel() != shape_.numel()) {
      throw std::invalid_argument("reshape from " + shape_.str() + " to " + shape.str() +
                                  " changes element count");
    }
    Tensor out(*this);
    out.shape_ = shape;
    return out;
  }

  /// Deep copy of values only (no grad, no tape).
  Tensor clone() const {
    return Tensor(shape_, payload_->value);
  }

  /// Detaches this buffer (and therefore every alias of it) from its tape.
  void detach() {
    if (payload_) payload_->tape = nullptr;
  }

 private:
  friend class Tape<T>;

  void ensure_grad() {
    payload_->grad.assign(payload_->value.size(), T(0));
  }

  Shape shape_{};
  std::shared_ptr<detail::TensorPayload<T>> payload_;
};

/// Reverse-mode differentiation record for one forward pass. Operations
/// append a backward rule whenever one of their inputs is attached to a
/// tape; rules run in reverse order and accumulate into grad buffers, so a
/// tensor used twice receives the sum of both contributions. Single-owner:
/// one forward/backward pass at a time.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Marks `t` as a leaf: allocates (and zeroes) its gradient buffer and
  /// attaches it to this tape. Re-watching zeroes any stale gradient.
  void watch(Tensor<T>& t) {
    t.payload_->tape = this;
    t.ensure_grad();
  }

  /// Attaches an op output produced under this tape.
  void adopt(Tensor<T>& t) {
    t.payload_->tape = this;
    t.ensure_grad();
  }

  void record(std::function<void()> backward_rule) {
    records_.push_back(std::move(backward_rule));
  }

  size_t size() const { return records_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and replays all rules in reverse.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw std::invalid_argument("backward requires a scalar loss, shape is " +
                                  loss.shape().str());
    }
    if (loss.tape() != this) {
      throw std::invalid_argument("backward: loss tensor is not attached to this tape");
    }
    const_cast<Tensor<T>&>(loss).grad_vec()[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> records_;
};

/// The tape shared by a set of operands, if any. Operations record
/// themselves on this tape and adopt their output into it.
template <typename T>
inline Tape<T>* tape_of(std::initializer_list<const Tensor<T>*> operands) {
  for (const Tensor<T>* t : operands) {
    if (t->defined() && t->tape() != nullptr) return t->tape();
  }
  return nullptr;
}

}  // namespace stmunet
