#include "conv_kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <string>
#include <vector>

namespace stwo::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy + i - pad][ox + j - pad], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const auto hw = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.in_ch; ++c)
    for (std::int64_t i = 0; i < g.k_h; ++i)
      for (std::int64_t j = 0; j < g.k_w; ++j) {
        T* row = cols + ((c * g.k_h + i) * g.k_w + j) * hw;
        const T* plane = x + c * g.in_h * g.in_w;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = oy + i - g.pad;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.in_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = ox + j - g.pad;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* x) {
  const auto hw = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.in_ch; ++c)
    for (std::int64_t i = 0; i < g.k_h; ++i)
      for (std::int64_t j = 0; j < g.k_w; ++j) {
        const T* row = cols + ((c * g.k_h + i) * g.k_w + j) * hw;
        T* plane = x + c * g.in_h * g.in_w;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = oy + i - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.in_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = ox + j - g.pad;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

ConvGeometry conv_geometry(const Shape& x, const Shape& w, int pad) {
  if (x.size() != 4) throw DimensionError("conv2d: input must be b x c x H x W, got " + shape_str(x));
  if (w.size() != 4 && w.size() != 5)
    throw DimensionError("conv2d: weight must be o x c x kh x kw or b x o x c x kh x kw, got " + shape_str(w));
  if (pad < 0) throw DimensionError("conv2d: negative padding");
  ConvGeometry g{};
  g.per_sample = w.size() == 5;
  const std::size_t off = g.per_sample ? 1 : 0;
  g.batch = x[0];
  g.in_ch = x[1];
  g.in_h = x[2];
  g.in_w = x[3];
  g.out_ch = w[off];
  g.k_h = w[off + 2];
  g.k_w = w[off + 3];
  g.pad = pad;
  if (w[off + 1] != g.in_ch)
    throw DimensionError("conv2d: channel mismatch, input " + shape_str(x) + " weight " + shape_str(w));
  if (g.per_sample && w[0] != g.batch)
    throw DimensionError("conv2d: per-sample weight batch " + std::to_string(w[0]) + " vs input batch " +
                         std::to_string(g.batch));
  g.out_h = g.in_h + 2 * pad - g.k_h + 1;
  g.out_w = g.in_w + 2 * pad - g.k_w + 1;
  if (g.out_h <= 0 || g.out_w <= 0) throw DimensionError("conv2d: kernel larger than padded input");
  return g;
}

template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t p, bool trans_a,
          bool trans_b, bool accumulate) {
  MatMap<T> cm(c, m, p);
  auto run = [&](const auto& am, const auto& bm) {
    if (accumulate)
      cm.noalias() += am * bm;
    else
      cm.noalias() = am * bm;
  };
  ConstMatMap<T> am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMatMap<T> bm(b, trans_b ? p : k, trans_b ? k : p);
  if (trans_a && trans_b)
    run(am.transpose(), bm.transpose());
  else if (trans_a)
    run(am.transpose(), bm);
  else if (trans_b)
    run(am, bm.transpose());
  else
    run(am, bm);
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, T* y) {
  const auto hw = g.out_h * g.out_w;
  const auto in_plane = g.in_ch * g.in_h * g.in_w;
  Buffer<T> cols(g.identity_cols() ? 0 : static_cast<std::size_t>(g.patch() * hw));
  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * in_plane;
    const T* src = xb;
    if (!g.identity_cols()) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    gemm<T>(w + b * g.weight_stride(), src, y + b * g.out_ch * hw, g.out_ch, g.patch(), hw, false, false, false);
  }
}

template <typename T>
void conv_input_grad(const ConvGeometry& g, const T* gy, const T* w, T* gx) {
  const auto hw = g.out_h * g.out_w;
  const auto in_plane = g.in_ch * g.in_h * g.in_w;
  Buffer<T> cols(g.identity_cols() ? 0 : static_cast<std::size_t>(g.patch() * hw));
  for (std::int64_t b = 0; b < g.batch; ++b) {
    T* gxb = gx + b * in_plane;
    T* dst = g.identity_cols() ? gxb : cols.data();
    gemm<T>(w + b * g.weight_stride(), gy + b * g.out_ch * hw, dst, g.patch(), g.out_ch, hw, true, false, false);
    if (!g.identity_cols()) {
      std::fill_n(gxb, in_plane, T(0));
      col2im_add(g, cols.data(), gxb);
    }
  }
}

template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* gy, T* gw) {
  const auto hw = g.out_h * g.out_w;
  const auto in_plane = g.in_ch * g.in_h * g.in_w;
  Buffer<T> cols(g.identity_cols() ? 0 : static_cast<std::size_t>(g.patch() * hw));
  if (!g.per_sample) std::fill_n(gw, g.out_ch * g.patch(), T(0));
  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * in_plane;
    const T* src = xb;
    if (!g.identity_cols()) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    gemm<T>(gy + b * g.out_ch * hw, src, gw + b * g.weight_stride(), g.out_ch, hw, g.patch(), false, true,
            !g.per_sample);
  }
}

#define STWO_INSTANTIATE_KERNELS(T)                                                                   \
  template void gemm<T>(const T*, const T*, T*, std::int64_t, std::int64_t, std::int64_t, bool, bool, bool); \
  template void conv_forward<T>(const ConvGeometry&, const T*, const T*, T*);                          \
  template void conv_input_grad<T>(const ConvGeometry&, const T*, const T*, T*);                       \
  template void conv_weight_grad<T>(const ConvGeometry&, const T*, const T*, T*);

STWO_INSTANTIATE_KERNELS(float)
STWO_INSTANTIATE_KERNELS(double)

}  // namespace stwo::kernels
