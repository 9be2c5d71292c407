// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense n-dimensional tensors with reverse-mode automatic differentiation.
//
// A Tensor is an immutable value: its buffer is never written after
// construction, so tensors are safe to share across threads and to capture
// in backward closures. Differentiation is tape-based: a Tape records every
// operation whose inputs participate in it, and Tape::backward replays the
// records in exact reverse order, accumulating gradients per node. A Tape is
// single-writer; backward() is const and can be called repeatedly.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "expdate/common.hpp"
#include "expdate/rng.hpp"

namespace expdate {

template <class T>
class Tape;
template <class T>
class Gradients;

template <class T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor requires a float type");

 public:
  using Shape = std::vector<std::size_t>;

  Tensor() : Tensor(Shape{0}, std::vector<T>{}) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        size_(detail::shape_size(shape_)),
        data_(std::make_shared<const std::vector<T>>(std::move(values))) {
    if (data_->size() != size_)
      throw std::invalid_argument(detail::cat("tensor data length ", data_->size(),
                                              " does not match shape ",
                                              detail::shape_str(shape_)));
  }

  static Tensor zeros(Shape shape) {
    std::size_t n = detail::shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
  }

  static Tensor full(Shape shape, T value) {
    std::size_t n = detail::shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  /// I.i.d. standard-normal entries, deterministic under the rng state.
  static Tensor randn(Rng& rng, Shape shape) {
    std::size_t n = detail::shape_size(shape);
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rng.normal());
    return Tensor(std::move(shape), std::move(v));
  }

  static Tensor uniform(Rng& rng, Shape shape, T lo, T hi) {
    std::size_t n = detail::shape_size(shape);
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return size_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  const T* data() const { return data_->data(); }
  const std::vector<T>& values() const { return *data_; }
  T operator[](std::size_t i) const { return (*data_)[i]; }

  T item() const {
    if (size_ != 1)
      throw std::invalid_argument(detail::cat("item() on non-scalar tensor of shape ",
                                              detail::shape_str(shape_)));
    return (*data_)[0];
  }

  bool on_tape() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }

  /// Copy sharing this buffer but tracked as tape node `node`.
  Tensor attached(Tape<T>* tape, int node) const {
    Tensor t(*this);
    t.tape_ = tape;
    t.node_ = node;
    return t;
  }

  /// Copy with the tape link severed; never receives a gradient.
  Tensor detached() const {
    Tensor t(*this);
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

  /// View with the same buffer and a new shape of identical element count.
  Tensor reshaped(Shape shape) const {
    if (detail::shape_size(shape) != size_)
      throw std::invalid_argument(detail::cat("cannot reshape ", detail::shape_str(shape_),
                                              " into ", detail::shape_str(shape)));
    Tensor t(*this);
    t.shape_ = std::move(shape);
    return t;
  }

 private:
  Shape shape_;
  std::size_t size_ = 0;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

/// Per-node gradient accumulator produced by Tape::backward.
///
/// Gradients for interior nodes are released as soon as they have been
/// propagated; lookups are supported for watched leaves (parameters), where
/// an unreachable parameter reads back as zeros of its own shape.
template <class T>
class Gradients {
 public:
  explicit Gradients(std::size_t node_count) : slots_(node_count) {}

  void add(int node, const T* g, std::size_t n, const std::vector<std::size_t>& shape) {
    Slot& s = slots_.at(static_cast<std::size_t>(node));
    if (!s.set) {
      s.value.assign(g, g + n);
      s.shape = shape;
      s.set = true;
    } else {
      if (s.value.size() != n)
        throw std::logic_error("gradient accumulation with mismatched sizes");
      for (std::size_t i = 0; i < n; ++i) s.value[i] += g[i];
    }
  }

  void add(int node, const Tensor<T>& g) { add(node, g.data(), g.size(), g.shape()); }

  bool reached(const Tensor<T>& t) const {
    return t.node() >= 0 && slots_.at(static_cast<std::size_t>(t.node())).set;
  }

  /// Gradient of the loss w.r.t. a watched tensor; zeros if unreachable.
  Tensor<T> at(const Tensor<T>& t) const {
    if (t.node() < 0)
      throw std::invalid_argument("gradient requested for a tensor that is not on the tape");
    const Slot& s = slots_.at(static_cast<std::size_t>(t.node()));
    if (!s.set) return Tensor<T>::zeros(t.shape());
    if (s.value.size() != t.size())
      throw std::logic_error(
          "gradient of an interior node was released; only watched leaves are retained");
    return Tensor<T>(t.shape(), s.value);
  }

 private:
  template <class U>
  friend class Tape;

  struct Slot {
    std::vector<T> value;
    std::vector<std::size_t> shape;
    bool set = false;
  };
  std::vector<Slot> slots_;
};

template <class T>
class Tape {
 public:
  /// Backward rule: receives the node's output gradient and accumulates
  /// input gradients. Must not record new nodes.
  using BackwardFn = std::function<void(const Tensor<T>& upstream, Gradients<T>&)>;

  /// Registers a leaf (typically a parameter) so its gradient can be read
  /// back after backward().
  Tensor<T> watch(const Tensor<T>& value) {
    nodes_.push_back(Node{nullptr});
    return value.attached(this, static_cast<int>(nodes_.size()) - 1);
  }

  /// Records an operation node; returns its handle.
  int record(BackwardFn backward) {
    nodes_.push_back(Node{std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse sweep from `loss` (a scalar on this tape). Repeated calls
  /// return identical gradients; the tape itself is not modified.
  Gradients<T> backward(const Tensor<T>& loss) const {
    if (loss.tape() != this || loss.node() < 0)
      throw std::invalid_argument("backward: loss is not recorded on this tape");
    if (loss.size() != 1)
      throw std::invalid_argument(detail::cat("backward: loss must be scalar, got shape ",
                                              detail::shape_str(loss.shape())));
    Gradients<T> grads(nodes_.size());
    grads.add(loss.node(), Tensor<T>::full(loss.shape(), T(1)));
    for (int i = loss.node(); i >= 0; --i) {
      auto& slot = grads.slots_[static_cast<std::size_t>(i)];
      if (!slot.set || !nodes_[static_cast<std::size_t>(i)].backward) continue;
      // The slot is final: only consumers (later nodes) add to it, and they
      // have all been processed. Move it out so large activations free early.
      Tensor<T> upstream(slot.shape, std::move(slot.value));
      nodes_[static_cast<std::size_t>(i)].backward(upstream, grads);
      slot.value.clear();
      slot.set = true;  // keep "reached" observable
    }
    return grads;
  }

 private:
  struct Node {
    BackwardFn backward;  // null for leaves
  };
  std::vector<Node> nodes_;
};

namespace detail {

/// The tape shared by a set of operands, or nullptr when all are detached.
template <class T>
Tape<T>* merged_tape(std::initializer_list<const Tensor<T>*> operands) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : operands) {
    if (!t->on_tape()) continue;
    if (tape != nullptr && tape != t->tape())
      throw std::logic_error("operands belong to different tapes");
    tape = t->tape();
  }
  return tape;
}

}  // namespace detail
}  // namespace expdate
