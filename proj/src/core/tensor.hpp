// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtvl::nc {

// Contract violations (bad shapes, bad arguments) and numeric faults
// (NaN/Inf under verification mode, zero-norm vectors) are kept distinct so
// callers and the C API can map them to different error codes.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

// Verification-mode switch: when on, op outputs (and external inputs) are
// scanned for NaN/Inf and a NumericFault is raised on detection.
bool& finite_checks();

inline bool& finite_checks() {
  thread_local bool enabled = false;
  return enabled;
}

struct FiniteCheckScope {
  bool prev;
  explicit FiniteCheckScope(bool on = true) : prev(finite_checks()) { finite_checks() = on; }
  ~FiniteCheckScope() { finite_checks() = prev; }
};

template <class T>
void check_finite(const std::vector<T>& v, const char* where) {
  if (!finite_checks()) return;
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericFault(std::string("non-finite value in ") + where);
  }
}

// Deterministic, serializable RNG (splitmix64). Used everywhere instead of
// <random> distributions so that trajectories are reproducible across
// standard libraries and restorable from checkpoints.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  int64_t below(int64_t n) { return int64_t(next_u64() % uint64_t(n)); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // fork a decorrelated stream (stable given the parent state)
  Rng fork() { return Rng(next_u64() ^ 0xd1b54a32d192ed03ull); }

  // state access for checkpointing
  uint64_t state() const { return state_; }
  bool has_spare() const { return has_spare_; }
  double spare() const { return spare_; }
  void restore(uint64_t state, bool has_spare, double spare) {
    state_ = state;
    has_spare_ = has_spare;
    spare_ = spare;
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <class T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;  // shared so reshape can alias
  std::vector<T> grad;                   // lazily allocated, same numel as data
  bool requires_grad = false;
};

// Dense n-d float tensor participating in reverse-mode differentiation.
// Value semantics on the handle; the payload is shared. Ops never mutate
// inputs; leaf values may be mutated between tapes (optimizer steps).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::make_shared<std::vector<T>>(size_t(numel_of(t.impl_->shape)), value);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false) {
    require(numel_of(shape) == int64_t(values.size()),
            "from_vector: shape " + shape_str(shape) + " does not match " +
                std::to_string(values.size()) + " values");
    check_finite(values, "from_vector");
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::make_shared<std::vector<T>>(std::move(values));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_vector({}, {value}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (T& x : t.values()) x = T(rng.normal() * stddev);
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                             bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (T& x : t.values()) x = T(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return int64_t(impl_->shape.size()); }
  int64_t dim(int64_t i) const { return impl_->shape[size_t(i)]; }
  int64_t numel() const { return numel_of(impl_->shape); }

  std::vector<T>& values() { return *impl_->data; }
  const std::vector<T>& values() const { return *impl_->data; }

  T item() const {
    require(numel() == 1, "item: tensor " + shape_str(shape()) + " is not scalar");
    return (*impl_->data)[0];
  }

  T at(std::initializer_list<int64_t> idx) const {
    int64_t off = 0;
    int64_t i = 0;
    for (int64_t v : idx) {
      off = off * impl_->shape[size_t(i)] + v;
      ++i;
    }
    return (*impl_->data)[size_t(off)];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  std::vector<T>& grad() {
    if (impl_->grad.empty()) impl_->grad.assign(size_t(numel()), T(0));
    return impl_->grad;
  }
  const std::vector<T>& grad_view() const { return impl_->grad; }

  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  // New handle sharing the value buffer, cut off from the graph.
  Tensor detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = false;
    return t;
  }

  Tensor clone() const {
    Tensor t = from_vector(impl_->shape, *impl_->data, impl_->requires_grad);
    return t;
  }

  // Aliasing view with a new shape; records no graph node (ops::reshape does).
  Tensor alias_with_shape(Shape shape) const {
    require(numel_of(shape) == numel(), "alias_with_shape: numel mismatch " +
                                            shape_str(shape) + " vs " + shape_str(this->shape()));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Reverse-mode tape. Nodes are recorded in execution order (a topological
// order by construction); backward() replays them once, in reverse.
template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& current() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

  static bool recording() { return current() != nullptr; }

  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  size_t size() const { return nodes_.size(); }

  void backward(Tensor<T> loss) {
    require(loss.defined() && loss.numel() == 1,
            "backward: loss must be scalar, got " +
                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    require(!consumed_, "backward: tape already consumed");
    consumed_ = true;
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// RAII activation of a tape on the current thread.
template <class T>
class TapeScope {
 public:
  TapeScope() : prev_(Tape<T>::current()) { Tape<T>::current() = &tape_; }
  ~TapeScope() { Tape<T>::current() = prev_; }
  TapeScope(const TapeScope&) = delete;

  Tape<T>& tape() { return tape_; }
  void backward(const Tensor<T>& loss) { tape_.backward(loss); }

 private:
  Tape<T> tape_;
  Tape<T>* prev_;
};

}  // namespace mtvl::nc
