#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "stwo/errors.hpp"

namespace stwo {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

// Vectorised kernels pick their summation order from the buffer address, so
// every buffer starts on the same boundary to keep results reproducible.
inline constexpr std::size_t kBufferAlign = 64;

template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlign})); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kBufferAlign}); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

// One recorded operation on the tape. `inputs` keeps the operands alive until
// the output tensor is released.
template <typename T>
struct Node {
  virtual ~Node() = default;

  // Returns one gradient per input (undefined tensors for inputs that need none).
  virtual std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) = 0;

  // True when backward() is written in terms of recorded ops, so a second
  // differentiation pass can run through it.
  virtual bool twice_differentiable() const { return true; }

  virtual const char* name() const = 0;

  std::vector<Tensor<T>> inputs;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  Buffer<T> data;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl<T>> grad;
  std::shared_ptr<Node<T>> grad_fn;
};

// Dense row-major tensor. Copies share the underlying storage; use clone() for
// an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  int ndim() const { return static_cast<int>(impl().shape.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().data.size()); }

  std::span<const T> data() const { return impl().data; }
  std::span<T> mutable_data() { return impl().data; }
  const T* ptr() const { return impl().data.data(); }
  T* mutable_ptr() { return impl().data.data(); }
  T item() const;
  T operator[](std::int64_t i) const { return impl().data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool flag);

  // Accumulated gradient from backward(); undefined when none has been written.
  Tensor grad() const;
  void set_grad(const Tensor& g);
  void zero_grad();

  const std::shared_ptr<Node<T>>& grad_fn() const { return impl().grad_fn; }
  void set_grad_fn(std::shared_ptr<Node<T>> fn);
  bool is_leaf() const { return impl().grad_fn == nullptr; }

  // Same values, no tape history, requires_grad = false.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const TensorImpl<T>* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  TensorImpl<T>& impl() const;

  std::shared_ptr<TensorImpl<T>> impl_;
};

// Thread-local switch controlling whether ops record onto the tape.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class EnableGradGuard {
 public:
  explicit EnableGradGuard(bool flag) : prev_(GradMode::enabled()) { GradMode::set_enabled(flag); }
  ~EnableGradGuard() { GradMode::set_enabled(prev_); }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool prev_;
};

// When on (the default), every op output is scanned and a NumericError is
// thrown on NaN/Inf.
class FiniteCheck {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

template <typename T>
bool all_finite(const Tensor<T>& t);

template <typename T>
void require_finite(const Tensor<T>& t, const char* op);

// Attach `node` to `out` if grad mode is on and any input requires grad.
template <typename T>
Tensor<T> record(Tensor<T> out, std::shared_ptr<Node<T>> node);

// Reverse-mode sweep from a scalar loss; leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& loss);

// Gradients of `output` (scalar) with respect to `inputs`, without touching
// the .grad fields. With create_graph the returned tensors are themselves on
// the tape and can be differentiated again.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
                            bool create_graph = false);

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace stwo
