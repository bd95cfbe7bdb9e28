#pragma once

#include <cstdint>

#include "stwo/tensor.hpp"

namespace stwo::kernels {

struct ConvGeometry {
  std::int64_t batch, in_ch, in_h, in_w;
  std::int64_t out_ch, k_h, k_w;
  std::int64_t out_h, out_w;
  int pad;
  bool per_sample;  // weight carries a leading batch axis

  std::int64_t patch() const { return in_ch * k_h * k_w; }
  std::int64_t weight_stride() const { return per_sample ? out_ch * patch() : 0; }
  bool identity_cols() const { return k_h == 1 && k_w == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, int pad);

// C (m x p) = op(A) * op(B), row-major; accumulate adds into C.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t p, bool trans_a,
          bool trans_b, bool accumulate);

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, T* y);

template <typename T>
void conv_input_grad(const ConvGeometry& g, const T* gy, const T* w, T* gx);

template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* gy, T* gw);

}  // namespace stwo::kernels
