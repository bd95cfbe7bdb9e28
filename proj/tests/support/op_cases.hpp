#pragma once

// Finite-difference cases covering every differentiable op, shared by the
// autograd tests and the acceptance runner.

#include <functional>
#include <random>
#include <string>

#include "stwo/ops.hpp"
#include "support/finite_diff.hpp"

namespace stwo::testing {

// Contract an op's output with a fixed random tensor so every output entry
// contributes a distinct weight to the scalar.
inline Tensor<double> project(const Tensor<double>& y, const Tensor<double>& r) { return ops::sum(ops::mul(y, r)); }

struct OpCase {
  std::string name;
  std::function<std::pair<std::vector<Tensor<double>>, Fn>(std::mt19937_64&)> make;
};

inline std::int64_t ext(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Builds a case whose function is sum(op(inputs) * R) with R drawn to match the output.
template <typename Op>
std::pair<std::vector<Tensor<double>>, Fn> projected(std::mt19937_64& rng, std::vector<Tensor<double>> inputs, Op op) {
  Tensor<double> r;
  {
    NoGradGuard ng;
    r = random_tensor(rng, op(inputs).shape());
  }
  return {inputs, [op, r](const std::vector<Tensor<double>>& in) { return project(op(in), r); }};
}

inline std::vector<OpCase> op_cases() {
  using V = std::vector<Tensor<double>>;
  std::vector<OpCase> cases;
  cases.push_back({"add/sub/mul", [](auto& rng) {
                     Shape s{ext(rng, 1, 4), ext(rng, 1, 5)};
                     return projected(rng, V{random_tensor(rng, s), random_tensor(rng, s), random_tensor(rng, s)},
                                      [](const V& in) { return ops::mul(ops::add(in[0], in[1]), ops::sub(in[2], in[0])); });
                   }});
  cases.push_back({"scale/add_scalar", [](auto& rng) {
                     return projected(rng, V{random_tensor(rng, {ext(rng, 1, 6)})},
                                      [](const V& in) { return ops::add_scalar(ops::scale(in[0], -1.7), 0.3); });
                   }});
  cases.push_back({"leaky_relu", [](auto& rng) {
                     return projected(rng, V{random_tensor(rng, {2, ext(rng, 1, 3), 3, 3})},
                                      [](const V& in) { return ops::leaky_relu(in[0]); });
                   }});
  cases.push_back({"leaky_relu_grad", [](auto& rng) {
                     auto g = random_tensor(rng, {3, ext(rng, 1, 5)});
                     auto x = random_tensor(rng, g.shape());
                     return projected(rng, V{g}, [x](const V& in) { return ops::leaky_relu_grad(in[0], x, 0.2); });
                   }});
  cases.push_back({"tanh", [](auto& rng) {
                     return projected(rng, V{random_tensor(rng, {ext(rng, 1, 4), 3})},
                                      [](const V& in) { return ops::tanh(in[0]); });
                   }});
  cases.push_back({"softplus", [](auto& rng) {
                     return projected(rng, V{random_tensor(rng, {ext(rng, 1, 7)}, 3.0)},
                                      [](const V& in) { return ops::softplus(in[0]); });
                   }});
  cases.push_back({"rms_normalize", [](auto& rng) {
                     return projected(rng, V{random_tensor(rng, {ext(rng, 1, 3), ext(rng, 2, 8)})},
                                      [](const V& in) { return ops::rms_normalize(in[0]); });
                   }});
  cases.push_back({"sum/mean/expand", [](auto& rng) {
                     auto x = random_tensor(rng, {ext(rng, 1, 4), ext(rng, 1, 4)});
                     return projected(rng, V{x}, [](const V& in) {
                       auto m = ops::mean(ops::mul(in[0], in[0]));
                       return ops::mul(ops::expand(m, in[0].shape()), in[0]);
                     });
                   }});
  cases.push_back({"matmul/transpose", [](auto& rng) {
                     auto m = ext(rng, 1, 4), k = ext(rng, 1, 5), p = ext(rng, 1, 4);
                     return projected(rng, V{random_tensor(rng, {m, k}), random_tensor(rng, {p, k})},
                                      [](const V& in) { return ops::matmul(in[0], ops::transpose(in[1])); });
                   }});
  cases.push_back({"reshape", [](auto& rng) {
                     auto a = ext(rng, 1, 4), b = ext(rng, 1, 4);
                     return projected(rng, V{random_tensor(rng, {a, b, 2})},
                                      [a, b](const V& in) { return ops::reshape(in[0], {2 * b, a}); });
                   }});
  cases.push_back({"concat/slice/pad", [](auto& rng) {
                     auto b = ext(rng, 1, 2), h = ext(rng, 1, 3);
                     return projected(rng, V{random_tensor(rng, {b, ext(rng, 1, 3), h, 2}), random_tensor(rng, {b, 2, h, 2})},
                                      [](const V& in) {
                                        auto c = ops::concat_channels(in[0], in[1]);
                                        auto s = ops::slice_channels(c, 1, c.dim(1) - 1);
                                        return ops::pad_channels(s, 1, s.dim(1) + 3);
                                      });
                   }});
  cases.push_back({"add_bias/sum_except/broadcast", [](auto& rng) {
                     auto c = ext(rng, 1, 4);
                     return projected(rng, V{random_tensor(rng, {2, c, 3, 2}), random_tensor(rng, {c})},
                                      [](const V& in) {
                                        auto y = ops::add_bias(in[0], in[1]);
                                        auto s = ops::sum_except_channels(ops::mul(y, y));
                                        return ops::add(y, ops::broadcast_channels(s, y.shape()));
                                      });
                   }});
  cases.push_back({"repeat_batch/sum_batch", [](auto& rng) {
                     auto n = ext(rng, 1, 4);
                     return projected(rng, V{random_tensor(rng, {1, 2, 3})}, [n](const V& in) {
                       auto r = ops::repeat_batch(in[0], n);
                       return ops::sum_batch(ops::mul(r, r));
                     });
                   }});
  cases.push_back({"resample", [](auto& rng) {
                     auto h = 2 * ext(rng, 1, 3);
                     return projected(rng, V{random_tensor(rng, {1, ext(rng, 1, 2), h, h})}, [](const V& in) {
                       auto d = ops::downsample2x(in[0]);
                       return ops::mul(ops::upsample2x(d), in[0]);
                     });
                   }});
  cases.push_back({"conv2d", [](auto& rng) {
                     auto k = ext(rng, 0, 1) * 2 + 1;
                     auto x = random_tensor(rng, {ext(rng, 1, 2), ext(rng, 1, 3), ext(rng, 3, 5), ext(rng, 3, 5)});
                     auto w = random_tensor(rng, {ext(rng, 1, 3), x.dim(1), k, k});
                     int pad = static_cast<int>((k - 1) / 2);
                     return projected(rng, V{x, w}, [pad](const V& in) { return ops::conv2d(in[0], in[1], pad); });
                   }});
  cases.push_back({"conv2d per-sample", [](auto& rng) {
                     auto x = random_tensor(rng, {2, ext(rng, 1, 3), 4, 4});
                     auto w = random_tensor(rng, {2, ext(rng, 1, 3), x.dim(1), 3, 3});
                     return projected(rng, V{x, w}, [](const V& in) { return ops::conv2d(in[0], in[1], 1); });
                   }});
  cases.push_back({"conv2d_input_grad", [](auto& rng) {
                     Shape xs{2, ext(rng, 1, 3), 4, 4};
                     auto g = random_tensor(rng, {2, ext(rng, 1, 3), 4, 4});
                     auto w = random_tensor(rng, {g.dim(1), xs[1], 3, 3});
                     return projected(rng, V{g, w},
                                      [xs](const V& in) { return ops::conv2d_input_grad(in[0], in[1], 1, xs); });
                   }});
  cases.push_back({"conv2d_weight_grad", [](auto& rng) {
                     auto x = random_tensor(rng, {2, ext(rng, 1, 3), 4, 4});
                     auto g = random_tensor(rng, {2, ext(rng, 1, 3), 4, 4});
                     Shape ws{g.dim(1), x.dim(1), 3, 3};
                     return projected(rng, V{x, g},
                                      [ws](const V& in) { return ops::conv2d_weight_grad(in[0], in[1], 1, ws); });
                   }});
  return cases;
}


}  // namespace stwo::testing
