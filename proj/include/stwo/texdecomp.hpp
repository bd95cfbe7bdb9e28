#pragma once

// Structure/texture decomposition by relative total variation (iteratively
// reweighted least squares with a conjugate-gradient inner solve), and the
// real-image pyramids fed to the discriminator.

#include <cstdint>
#include <span>
#include <vector>

#include "stwo/pyramid.hpp"
#include "stwo/tensor.hpp"

namespace stwo {

struct DecompositionParams {
  double lambda = 0.01;
  double sigma = 3.0;
  double sharpness_eps = 0.02;
  double texture_eps = 1e-3;
  int max_iter = 4;
  double cg_tol = 1e-5;
  int cg_max_iter = 200;

  void validate() const;
};

enum class DecompMethod { rtv, blur };

// Planar channels x height x width image.
struct Planar {
  std::int64_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  Planar() = default;
  Planar(std::int64_t c, std::int64_t h, std::int64_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c * h * w), fill) {}

  std::int64_t plane() const { return height * width; }
  double& at(std::int64_t c, std::int64_t y, std::int64_t x) { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
  double at(std::int64_t c, std::int64_t y, std::int64_t x) const { return data[static_cast<std::size_t>((c * height + y) * width + x)]; }
};

struct Decomposition {
  Planar structure, texture;
  int cg_iterations = 0;
};

// Gaussian low-pass with kernel size round(5 sigma) forced odd and mirrored borders.
Planar gaussian_filter(const Planar& img, double sigma);

// Per-pixel smoothness weights shared by all channels. wx couples (y,x)-(y,x+1)
// and is zero on the last column; wy couples (y,x)-(y+1,x) and is zero on the last row.
struct EdgeWeights {
  std::int64_t height = 0, width = 0;
  std::vector<double> wx, wy;
};

EdgeWeights rtv_weights(const Planar& x, double sigma, const DecompositionParams& p);

// I + lambda (Dx^T Wx Dx + Dy^T Wy Dy) over one image plane, stored as the
// diagonal plus the east and south couplings (the other two bands by symmetry).
struct SparseSystem {
  std::int64_t height = 0, width = 0;
  std::vector<double> diag, east, south;

  void apply(std::span<const double> x, std::span<double> y) const;
};

SparseSystem make_system(const EdgeWeights& w, double lambda);

struct CgResult {
  int iterations = 0;
  double residual = 0;  // final ||b - A x||
};

// Jacobi-preconditioned CG starting from the current contents of x. Throws
// NumericError when ||b - A x|| >= tol ||b|| after max_iter iterations.
CgResult cg_solve(const SparseSystem& a, std::span<const double> b, std::span<double> x, double tol, int max_iter);

// Works on the values as given; the default parameters are tuned for [0, 1].
Decomposition rtv_decompose(const Planar& img, const DecompositionParams& p = {});

// Structure = Gaussian blur, texture = residual.
Decomposition blur_decompose(const Planar& img, double sigma = 2.0);

Decomposition decompose(const Planar& img, DecompMethod method, const DecompositionParams& p = {});

// One image of a b x c x h x w batch, and back.
template <typename T>
Planar to_planar(const Tensor<T>& batch, std::int64_t index);
template <typename T>
void write_planar(const Planar& img, Tensor<T>& batch, std::int64_t index);

// images: b x 3 x 2^n x 2^n in [-1, 1]. rgb levels r+1..n by repeated 2x2
// averaging; the res-r image is decomposed once (mapped to [0, 1] for the solve,
// texture mapped back and clamped to [-1, 1]) and its texture averaged down to res 3.
template <typename T>
ImagePyramid<T> build_real_pyramid(const Tensor<T>& images, int n, int r, DecompMethod method = DecompMethod::rtv,
                                   const DecompositionParams& p = {});

// All rgb levels lowest..n, for the single-chain baseline discriminator.
template <typename T>
ImagePyramid<T> build_rgb_pyramid(const Tensor<T>& images, int n, int r, int lowest = 3);

}  // namespace stwo
