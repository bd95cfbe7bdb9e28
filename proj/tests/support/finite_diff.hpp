#pragma once

// Central finite-difference oracle. Independent of the tape: it only ever
// evaluates the forward function with grad recording disabled.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stwo/tensor.hpp"

namespace stwo::testing {

using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline std::vector<std::vector<double>> numeric_grads(const Fn& f, std::vector<Tensor<double>> inputs,
                                                      double h = 1e-5) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  for (auto& in : inputs) {
    std::vector<double> g(static_cast<std::size_t>(in.numel()));
    auto data = in.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f(inputs).item();
      data[i] = orig - h;
      const double fm = f(inputs).item();
      data[i] = orig;
      g[i] = (fp - fm) / (2 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// max |analytic - numeric| / max(max |numeric|, 1e-8), over every input.
inline double gradient_rel_error(const Fn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5) {
  for (auto in : inputs) in.set_requires_grad(true);
  auto loss = f(inputs);
  auto analytic = stwo::grad(loss, inputs);
  auto numeric = numeric_grads(f, inputs, h);
  double max_diff = 0, max_ref = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < numeric[k].size(); ++i) {
      max_diff = std::max(max_diff, std::abs(analytic[k].data()[i] - numeric[k][i]));
      max_ref = std::max(max_ref, std::abs(numeric[k][i]));
    }
  return max_diff / std::max(max_ref, 1e-8);
}

inline Tensor<double> random_tensor(std::mt19937_64& rng, const Shape& shape, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor<double> t(shape);
  for (auto& v : t.mutable_data()) v = nd(rng);
  return t;
}

}  // namespace stwo::testing
