#include "stwo/adam.hpp"

#include <algorithm>
#include <cmath>

namespace stwo {

template <typename T>
Tensor<T> ParameterSet<T>::add(const std::string& name, Tensor<T> init) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  init.set_requires_grad(true);
  Parameter<T> p;
  p.name = name;
  p.tensor = init;
  p.adam_m.assign(static_cast<std::size_t>(init.numel()), T(0));
  p.adam_v.assign(static_cast<std::size_t>(init.numel()), T(0));
  params_.push_back(std::move(p));
  return init;
}

template <typename T>
Parameter<T>& ParameterSet<T>::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no parameter named '" + name + "'");
}

template <typename T>
const Parameter<T>& ParameterSet<T>::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no parameter named '" + name + "'");
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter<T>& p) { return p.name == name; });
}

template <typename T>
std::int64_t ParameterSet<T>::count_values() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void ParameterSet<T>::set_requires_grad(bool flag) {
  for (auto& p : params_) p.tensor.set_requires_grad(flag);
}

template <typename T>
template <typename U>
void ParameterSet<T>::copy_from(const ParameterSet<U>& src, bool with_optimizer) {
  for (auto& p : params_) {
    const auto& q = src.at(p.name);
    if (q.tensor.shape() != p.tensor.shape())
      throw DimensionError("parameter '" + p.name + "' has shape " + shape_str(q.tensor.shape()) + ", expected " +
                           shape_str(p.tensor.shape()));
    std::transform(q.tensor.data().begin(), q.tensor.data().end(), p.tensor.mutable_data().begin(),
                   [](U v) { return static_cast<T>(v); });
    if (with_optimizer) {
      p.adam_m.assign(q.adam_m.begin(), q.adam_m.end());
      p.adam_v.assign(q.adam_v.begin(), q.adam_v.end());
      p.step_count = q.step_count;
    }
  }
}

template <typename T>
void adam_step(ParameterSet<T>& params, const AdamOptions& opt) {
  for (const auto& p : params.items())
    if (!p.tensor.grad().defined()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");

  for (auto& p : params.items()) {
    ++p.step_count;
    const double t = static_cast<double>(p.step_count);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    auto g = p.tensor.grad().data();
    auto theta = p.tensor.mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double m = opt.beta1 * p.adam_m[i] + (1.0 - opt.beta1) * gi;
      const double v = opt.beta2 * p.adam_v[i] + (1.0 - opt.beta2) * gi * gi;
      p.adam_m[i] = static_cast<T>(m);
      p.adam_v[i] = static_cast<T>(v);
      const double update = opt.lr * (m / bc1) / (std::sqrt(v / bc2) + opt.eps);
      theta[i] = static_cast<T>(theta[i] - update);
    }
    p.tensor.zero_grad();
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template void ParameterSet<float>::copy_from(const ParameterSet<float>&, bool);
template void ParameterSet<float>::copy_from(const ParameterSet<double>&, bool);
template void ParameterSet<double>::copy_from(const ParameterSet<float>&, bool);
template void ParameterSet<double>::copy_from(const ParameterSet<double>&, bool);
template void adam_step(ParameterSet<float>&, const AdamOptions&);
template void adam_step(ParameterSet<double>&, const AdamOptions&);

}  // namespace stwo
