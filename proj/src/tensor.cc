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

#include "kws/tensor.h"

#include <algorithm>
#include <sstream>

namespace kws {
inline namespace KWS_PRECISION_NS {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(NumElements(shape), Real(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  KWS_CHECK(values.size() == NumElements(shape), "shape ", ShapeString(shape),
            " needs ", NumElements(shape), " values, got ", values.size());
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::Full(Shape shape, Real value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::Scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

const Shape& Tensor::shape() const {
  KWS_CHECK(impl_, "undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  KWS_CHECK(axis < rank(), "axis ", axis, " out of range for rank ", rank());
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return defined() ? impl_->data.size() : 0; }

std::span<Real> Tensor::data() {
  KWS_CHECK(impl_, "undefined tensor");
  return impl_->data;
}

std::span<const Real> Tensor::data() const {
  KWS_CHECK(impl_, "undefined tensor");
  return impl_->data;
}

Real Tensor::item() const {
  KWS_CHECK(numel() == 1, "item() on tensor of shape ", ShapeString(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  KWS_CHECK(impl_, "undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const Real> Tensor::grad() const {
  KWS_CHECK(impl_, "undefined tensor");
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() const {
  KWS_CHECK(impl_, "undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::Clone() const {
  KWS_CHECK(impl_, "undefined tensor");
  return Tensor(impl_->shape, impl_->data, false);
}

bool Tape::ShouldRecord(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) {
    return t != nullptr && t->requires_grad();
  });
}

void Tape::Record(const Tensor& output, std::function<void()> backward_rule) {
  KWS_CHECK(enabled_, "recording on a disabled tape");
  nodes_.push_back(Node{output, std::move(backward_rule)});
}

void Tape::Backward(const Tensor& loss) {
  KWS_CHECK(loss.defined() && loss.numel() == 1,
            "backward needs a scalar loss, got shape ",
            loss.defined() ? ShapeString(loss.shape()) : std::string("<none>"));
  const bool on_tape =
      std::any_of(nodes_.begin(), nodes_.end(),
                  [&](const Node& n) { return n.output.SameStorage(loss); });
  KWS_CHECK(on_tape, "loss was not produced by an op on this tape");

  for (Node& node : nodes_) node.output.zero_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] = Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward_rule();
  }
}

}  // namespace KWS_PRECISION_NS
}  // namespace kws
