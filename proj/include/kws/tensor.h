// Copyright 2026 The kws-tcanet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with a define-by-run gradient tape.
//
// The storage scalar is float by default. Building with KWS_USE_DOUBLE
// switches it to double and moves every symbol into a distinct inline
// namespace, so a float and a double build of the numerics can be linked
// into one binary (the double build backs finite-difference gradient checks).

#ifndef KWS_TENSOR_H_
#define KWS_TENSOR_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kws/errors.h"

#if defined(KWS_USE_DOUBLE)
#define KWS_PRECISION_NS f64
#else
#define KWS_PRECISION_NS f32
#endif

namespace kws {
inline namespace KWS_PRECISION_NS {

#if defined(KWS_USE_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Shared handle to a buffer. Copies alias the same storage; use Clone() for
// an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Full(Shape shape, Real value);
  static Tensor Scalar(Real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<Real> data();
  std::span<const Real> data() const;
  Real& operator[](std::size_t i) { return data()[i]; }
  Real operator[](std::size_t i) const { return data()[i]; }
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  // Gradient buffer; empty span until something accumulates into it.
  bool has_grad() const;
  std::span<const Real> grad() const;
  // Allocates a zero gradient on first use. Gradient buffers are mutable
  // through const handles; only parameter values are const-protected.
  std::span<Real> mutable_grad() const;
  void zero_grad();

  Tensor Clone() const;
  bool SameStorage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of differentiable operations. Each forward op appends one
// node whose closure reads the output gradient and accumulates into its
// inputs, so reverse order is a valid topological order.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const { return enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // True if recording is on and any input participates in differentiation.
  bool ShouldRecord(std::initializer_list<const Tensor*> inputs) const;

  void Record(const Tensor& output, std::function<void()> backward_rule);

  // Seeds d(loss)/d(loss) = 1 and runs every node once in reverse. Gradients
  // of intermediate tensors are reset first; leaf gradients accumulate.
  void Backward(const Tensor& loss);

  void Clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward_rule;
  };
  bool enabled_;
  std::vector<Node> nodes_;
};

inline void Backward(const Tensor& loss, Tape& tape) { tape.Backward(loss); }

}  // namespace KWS_PRECISION_NS
}  // namespace kws

#endif  // KWS_TENSOR_H_
