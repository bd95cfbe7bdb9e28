#pragma once

// Style-modulated convolution weights: demodulation, its diagonal-factor form,
// weight decomposition U diag(S) V^T, and the orthogonality penalty on U, V.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stwo/adam.hpp"
#include "stwo/tensor.hpp"

namespace stwo {

enum class ModScheme { demod, decomp };

const char* to_string(ModScheme s);

// Kernel extents o x i x h x w. The flattened weight matrix is o x (i*h*w).
struct KernelDims {
  std::int64_t out = 0, in = 0, kh = 1, kw = 1;

  std::int64_t flat_in() const { return in * kh * kw; }
  Shape shape() const { return {out, in, kh, kw}; }
};

// Maps an intermediate latent (b x w_dim) to per-input-channel scales (b x i).
template <typename T>
struct AffineStyle {
  Tensor<T> weight;  // w_dim x i
  Tensor<T> bias;    // i, initialised to ones

  Tensor<T> operator()(const Tensor<T>& w_latent) const;
};

template <typename T>
struct DemodLayer {
  KernelDims dims;
  Tensor<T> weight;  // o x i x h x w
  double eps = 1e-8;
};

template <typename T>
struct DecompLayer {
  KernelDims dims;
  Tensor<T> u;  // o x i
  Tensor<T> v;  // (i*h*w) x i
  bool ortho_regularized = false;
};

template <typename T>
using StyledLayer = std::variant<DemodLayer<T>, DecompLayer<T>>;

// W' = (W * S) / sigma with sigma per output channel. `style` is {i} (result
// o x i x h x w) or {b, i} (result b x o x i x h x w).
template <typename T>
Tensor<T> demodulate(const DemodLayer<T>& layer, const Tensor<T>& style);

// reshape(U diag(S) V^T); same style/result shapes as demodulate().
template <typename T>
Tensor<T> decompose_weight(const DecompLayer<T>& layer, const Tensor<T>& style);

template <typename T>
Tensor<T> effective_weight(const StyledLayer<T>& layer, const Tensor<T>& style);

// alpha * (||U^T U - I||_F^2 + ||V^T V - I||_F^2). Requires layer.ortho_regularized.
template <typename T>
Tensor<T> ortho_penalty(const DecompLayer<T>& layer, T alpha);

// ||M^T M - I||_F^2 for one factor, without the tape.
template <typename T>
double gram_deviation(const Tensor<T>& m);

// S = affine(w_latent); y = conv2d(x, effective weight, (k-1)/2).
template <typename T>
Tensor<T> modulated_conv_forward(const Tensor<T>& x, const StyledLayer<T>& layer, const AffineStyle<T>& affine,
                                 const Tensor<T>& w_latent);

// ---- diagonal-factor form of demodulation --------------------------------

// Demodulated weight as A * What * B with A (out x out) and B (in x in) diagonal.
struct DemodFactors {
  std::vector<double> a;  // 1 / sigma_n, length o
  std::vector<double> b;  // s_c repeated over channel c's h*w block, length i*h*w
};

DemodFactors demod_diag_factors(const DemodLayer<double>& layer, std::span<const double> style);

// reshape(A * What * B) as a flat o*i*h*w vector, computed with explicit
// diagonal-matrix products.
std::vector<double> apply_demod_factors(const DemodFactors& f, const DemodLayer<double>& layer);

// ---- perturbation sensitivity --------------------------------------------

struct SensitivityReport {
  ModScheme scheme = ModScheme::demod;
  std::int64_t channel = 0;
  double delta = 0;
  std::int64_t rows = 0, cols = 0;
  std::vector<double> delta_w;  // rows x cols, row-major
  double frobenius = 0;
  std::vector<double> singular_values;  // descending
  std::int64_t numerical_rank = 0;
  double changed_fraction = 0;  // share of entries with |dW| > 1e-12
};

// dW = W(S + delta e_channel) - W(S) in matrix form. `channel` is 0-based.
SensitivityReport perturb_report(const StyledLayer<double>& layer, std::span<const double> style,
                                 std::int64_t channel, double delta);

// ---- construction ----------------------------------------------------------

// Modified Gram-Schmidt on the columns of a rows x cols row-major matrix; when
// rows < cols the rows are orthonormalised instead.
void orthonormalize(std::span<double> m, std::int64_t rows, std::int64_t cols);

template <typename T>
AffineStyle<T> make_affine(ParameterSet<T>& params, const std::string& name, std::int64_t w_dim,
                           std::int64_t channels, std::mt19937_64& rng);

template <typename T>
DemodLayer<T> make_demod_layer(ParameterSet<T>& params, const std::string& name, KernelDims dims,
                               std::mt19937_64& rng);

// U, V entries ~ N(0, 1/rows); `orthonormal` then applies orthonormalize().
enum class FactorInit { gaussian, orthonormal };

template <typename T>
DecompLayer<T> make_decomp_layer(ParameterSet<T>& params, const std::string& name, KernelDims dims,
                                 bool ortho_regularized, FactorInit init, std::mt19937_64& rng);

}  // namespace stwo
