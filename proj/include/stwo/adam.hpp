#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stwo/tensor.hpp"

namespace stwo {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;  // requires_grad = true
  std::vector<T> adam_m;
  std::vector<T> adam_v;
  std::uint64_t step_count = 0;
};

// Named, insertion-ordered parameters of one model. Names are unique.
template <typename T>
class ParameterSet {
 public:
  // Registers `init` (which becomes a grad-requiring leaf) and returns its handle.
  Tensor<T> add(const std::string& name, Tensor<T> init);

  Parameter<T>& at(const std::string& name);
  const Parameter<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t count_values() const;

  void zero_grad();
  void set_requires_grad(bool flag);

  // Overwrites values (and optimizer state when `with_optimizer`) by name,
  // converting precision as needed. Every name here must exist in `src`.
  template <typename U>
  void copy_from(const ParameterSet<U>& src, bool with_optimizer);

 private:
  std::vector<Parameter<T>> params_;
};

struct AdamOptions {
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Bias-corrected Adam update on every parameter, then clears the gradients.
// Throws ContractError if any parameter has no gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, const AdamOptions& opt);

}  // namespace stwo
