#pragma once

#include <map>
#include <string>

#include "stwo/errors.hpp"
#include "stwo/tensor.hpp"

namespace stwo {

// Multi-resolution image set keyed by resolution exponent (level res is
// 2^res x 2^res). For the split discriminator `rgb` holds r+1..n and `texture`
// holds 3..r; the single-chain baseline keeps every level 3..n in `rgb`.
template <typename T>
struct ImagePyramid {
  int n = 0, r = 0;
  std::map<int, Tensor<T>> rgb;
  std::map<int, Tensor<T>> texture;
};

inline void check_levels(int n, int r) {
  if (r < 3 || n <= r)
    throw ConfigError("need 3 <= r < n, got n=" + std::to_string(n) + " r=" + std::to_string(r));
}

template <typename T>
const Tensor<T>& pyramid_level(const std::map<int, Tensor<T>>& levels, int res, const char* kind) {
  auto it = levels.find(res);
  if (it == levels.end() || !it->second.defined())
    throw DimensionError(std::string("pyramid is missing ") + kind + " level " + std::to_string(res));
  const auto& t = it->second;
  const std::int64_t side = std::int64_t{1} << res;
  if (t.ndim() != 4 || t.dim(1) != 3 || t.dim(2) != side || t.dim(3) != side)
    throw DimensionError(std::string(kind) + " level " + std::to_string(res) + " has shape " + shape_str(t.shape()));
  return t;
}

}  // namespace stwo
