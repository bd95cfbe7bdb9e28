#include "stwo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stwo/ops.hpp"

namespace stwo {

std::int64_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
bool g_finite_check = true;

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool flag) { g_grad_enabled = flag; }

bool FiniteCheck::enabled() { return g_finite_check; }
void FiniteCheck::set_enabled(bool flag) { g_finite_check = flag; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  for (auto e : shape)
    if (e < 0) throw DimensionError("negative extent in " + shape_str(shape));
  impl_->data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorImpl<T>>()) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data.assign(data.begin(), data.end());
}

template <typename T>
TensorImpl<T>& Tensor<T>::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const auto& s = impl().shape;
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  impl().requires_grad = flag;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad() const {
  return Tensor(impl().grad);
}

template <typename T>
void Tensor<T>::set_grad(const Tensor& g) {
  if (g.defined() && g.shape() != shape())
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " does not match " +
                         shape_str(shape()));
  impl().grad = g.impl_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl().grad.reset();
}

template <typename T>
void Tensor<T>::set_grad_fn(std::shared_ptr<Node<T>> fn) {
  impl().grad_fn = std::move(fn);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto copy = std::make_shared<TensorImpl<T>>();
  copy->shape = impl().shape;
  copy->data = impl().data;
  return Tensor(std::move(copy));
}

template class Tensor<float>;
template class Tensor<double>;

template <typename T>
bool all_finite(const Tensor<T>& t) {
  // v - v is 0 for finite v and NaN otherwise; independent lanes let this vectorise.
  constexpr std::size_t L = 16;
  const auto d = t.data();
  T lanes[L] = {};
  std::size_t i = 0;
  for (; i + L <= d.size(); i += L)
    for (std::size_t k = 0; k < L; ++k) lanes[k] += d[i + k] - d[i + k];
  T acc = 0;
  for (; i < d.size(); ++i) acc += d[i] - d[i];
  for (T v : lanes) acc += v;
  return acc == T(0);
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  if (!all_finite(t)) throw NumericError(std::string("non-finite value produced by ") + op);
}

template <typename T>
Tensor<T> record(Tensor<T> out, std::shared_ptr<Node<T>> node) {
  if (FiniteCheck::enabled()) require_finite(out, node->name());
  if (!GradMode::enabled()) return out;
  bool any = std::any_of(node->inputs.begin(), node->inputs.end(),
                         [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  out.set_grad_fn(std::move(node));
  return out;
}

namespace {

// Post-order over tensors reachable through grad_fn edges, restricted to
// tensors that require grad. The root comes last.
template <typename T>
std::vector<Tensor<T>> topo_order(const Tensor<T>& root) {
  std::vector<Tensor<T>> order;
  std::unordered_set<const void*> visited;
  struct Frame {
    Tensor<T> t;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root.id());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& fn = top.t.grad_fn();
    if (fn && top.next < fn->inputs.size()) {
      const Tensor<T>& in = fn->inputs[top.next++];
      if (in.defined() && in.requires_grad() && visited.insert(in.id()).second) stack.push_back({in, 0});
      continue;
    }
    order.push_back(top.t);
    stack.pop_back();
  }
  return order;
}

// Shared reverse sweep. `on_grad` sees every tensor's total gradient once.
template <typename T>
void sweep(const Tensor<T>& root, bool create_graph,
           const std::function<void(const Tensor<T>&, const Tensor<T>&)>& on_grad) {
  if (root.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(root.shape()));
  if (!root.requires_grad()) throw ContractError("loss does not depend on any tensor requiring grad");

  EnableGradGuard mode(create_graph);
  auto order = topo_order(root);
  std::unordered_map<const void*, Tensor<T>> grads;
  grads.emplace(root.id(), Tensor<T>(root.shape(), T(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor<T>& t = *it;
    auto found = grads.find(t.id());
    if (found == grads.end()) continue;
    Tensor<T> g = found->second;
    grads.erase(found);
    on_grad(t, g);

    const auto& fn = t.grad_fn();
    if (!fn) continue;
    if (create_graph && !fn->twice_differentiable())
      throw ContractError(std::string("second-order gradient requested through ") + fn->name() +
                          ", which only supports first-order backward");
    auto in_grads = fn->backward(g);
    for (std::size_t i = 0; i < fn->inputs.size(); ++i) {
      const Tensor<T>& in = fn->inputs[i];
      if (!in.defined() || !in.requires_grad() || i >= in_grads.size() || !in_grads[i].defined())
        continue;
      if (in_grads[i].shape() != in.shape())
        throw ContractError(std::string(fn->name()) + " produced gradient of shape " +
                            shape_str(in_grads[i].shape()) + " for input " + shape_str(in.shape()));
      auto slot = grads.find(in.id());
      if (slot == grads.end())
        grads.emplace(in.id(), in_grads[i]);
      else
        slot->second = ops::add(slot->second, in_grads[i]);
    }
  }
}

}  // namespace

template <typename T>
void backward(const Tensor<T>& loss) {
  sweep<T>(loss, false, [](const Tensor<T>& t, const Tensor<T>& g) {
    if (!t.is_leaf()) return;
    Tensor<T> leaf = t;
    Tensor<T> prev = leaf.grad();
    leaf.set_grad(prev.defined() ? ops::add(prev, g) : g);
  });
}

template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
                            bool create_graph) {
  std::unordered_map<const void*, std::size_t> wanted;
  for (std::size_t i = 0; i < inputs.size(); ++i) wanted.emplace(inputs[i].id(), i);
  std::vector<Tensor<T>> result(inputs.size());
  sweep<T>(output, create_graph, [&](const Tensor<T>& t, const Tensor<T>& g) {
    auto it = wanted.find(t.id());
    if (it != wanted.end()) result[it->second] = g;
  });
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!result[i].defined()) result[i] = Tensor<T>(inputs[i].shape(), T(0));
  return result;
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(out));
}

template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);
template Tensor<float> record(Tensor<float>, std::shared_ptr<Node<float>>);
template Tensor<double> record(Tensor<double>, std::shared_ptr<Node<double>>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::vector<Tensor<float>> grad(const Tensor<float>&, const std::vector<Tensor<float>>&, bool);
template std::vector<Tensor<double>> grad(const Tensor<double>&, const std::vector<Tensor<double>>&, bool);
template Tensor<float> cast(const Tensor<double>&);
template Tensor<double> cast(const Tensor<float>&);
template Tensor<float> cast(const Tensor<float>&);
template Tensor<double> cast(const Tensor<double>&);

}  // namespace stwo
