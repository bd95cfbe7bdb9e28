#include "stwo/stylemod.hpp"

#include <Eigen/Core>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "stwo/ops.hpp"

namespace stwo {

const char* to_string(ModScheme s) { return s == ModScheme::demod ? "demod" : "decomp"; }

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Normalises `style` to b x i and checks it against the layer.
template <typename T>
std::pair<Tensor<T>, bool> batched_style(const Tensor<T>& style, std::int64_t channels, const char* op) {
  if (style.ndim() == 1) {
    if (style.dim(0) != channels)
      throw DimensionError(std::string(op) + ": style length " + std::to_string(style.dim(0)) +
                           " != input channels " + std::to_string(channels));
    return {ops::reshape(style, {1, channels}), true};
  }
  if (style.ndim() != 2 || style.dim(1) != channels)
    throw DimensionError(std::string(op) + ": style shape " + shape_str(style.shape()) + " does not match " +
                         std::to_string(channels) + " input channels");
  return {style, false};
}

template <typename T>
Tensor<T> unbatch(const Tensor<T>& w, const KernelDims& d, bool single) {
  return single ? ops::reshape(w, d.shape()) : w;
}

// Batched demodulation: b x o x i x h x w from W (o x i x h x w) and S (b x i).
template <typename T>
struct DemodNode : Node<T> {
  KernelDims dims;
  double eps = 0;
  std::vector<double> sigma;  // b x o

  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    const auto& w = this->inputs[0];
    const auto& s = this->inputs[1];
    const auto B = s.dim(0), O = dims.out, I = dims.in, K = dims.kh * dims.kw;
    Tensor<T> gw(w.shape()), gs(s.shape());
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t o = 0; o < O; ++o) {
        const double sig = sigma[static_cast<std::size_t>(b * O + o)];
        const T* gp = g.ptr() + (b * O + o) * I * K;
        const T* wp = w.ptr() + o * I * K;
        double gm = 0;
        for (std::int64_t c = 0; c < I; ++c)
          for (std::int64_t k = 0; k < K; ++k) gm += double(gp[c * K + k]) * wp[c * K + k] * s.ptr()[b * I + c];
        for (std::int64_t c = 0; c < I; ++c) {
          const double sc = s.ptr()[b * I + c];
          double ds = 0;
          for (std::int64_t k = 0; k < K; ++k) {
            const double m = wp[c * K + k] * sc;
            const double d = gp[c * K + k] / sig - m * gm / (sig * sig * sig);
            gw.mutable_ptr()[(o * I + c) * K + k] += static_cast<T>(d * sc);
            ds += d * wp[c * K + k];
          }
          gs.mutable_ptr()[b * I + c] += static_cast<T>(ds);
        }
      }
    return {gw, gs};
  }
  bool twice_differentiable() const override { return false; }
  const char* name() const override { return "demodulate"; }
};

// Batched decomposition: b x o x (i*h*w) from U (o x i), V (in x i), S (b x i).
template <typename T>
struct DecompNode : Node<T> {
  KernelDims dims;

  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    const auto& u = this->inputs[0];
    const auto& v = this->inputs[1];
    const auto& s = this->inputs[2];
    const auto B = s.dim(0), O = dims.out, I = dims.in, N = dims.flat_in();
    Eigen::Map<const RowMat<T>> U(u.ptr(), O, I), V(v.ptr(), N, I), S(s.ptr(), B, I);
    Tensor<T> gu(u.shape()), gv(v.shape()), gs(s.shape());
    Eigen::Map<RowMat<T>> GU(gu.mutable_ptr(), O, I), GV(gv.mutable_ptr(), N, I), GS(gs.mutable_ptr(), B, I);
    for (std::int64_t b = 0; b < B; ++b) {
      Eigen::Map<const RowMat<T>> G(g.ptr() + b * O * N, O, N);
      RowMat<T> gv_b = G * V;            // o x i
      RowMat<T> gtu_b = G.transpose() * U;  // in x i
      const auto sb = S.row(b).asDiagonal();
      GU.noalias() += gv_b * sb;
      GV.noalias() += gtu_b * sb;
      GS.row(b) = (U.cwiseProduct(gv_b)).colwise().sum();
    }
    return {gu, gv, gs};
  }
  bool twice_differentiable() const override { return false; }
  const char* name() const override { return "decompose_weight"; }
};

}  // namespace

template <typename T>
Tensor<T> AffineStyle<T>::operator()(const Tensor<T>& w_latent) const {
  Tensor<T> w = w_latent.ndim() == 1 ? ops::reshape(w_latent, {1, w_latent.dim(0)}) : w_latent;
  return ops::add_bias(ops::matmul(w, weight), bias);
}

template <typename T>
Tensor<T> demodulate(const DemodLayer<T>& layer, const Tensor<T>& style) {
  const auto& d = layer.dims;
  if (layer.weight.shape() != d.shape())
    throw DimensionError("demodulate: weight " + shape_str(layer.weight.shape()) + " vs dims " + shape_str(d.shape()));
  auto [s, single] = batched_style(style, d.in, "demodulate");
  const auto B = s.dim(0), O = d.out, I = d.in, K = d.kh * d.kw;
  Tensor<T> out({B, O, I, d.kh, d.kw});
  auto node = std::make_shared<DemodNode<T>>();
  node->dims = d;
  node->eps = layer.eps;
  node->sigma.resize(static_cast<std::size_t>(B * O));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < O; ++o) {
      const T* wp = layer.weight.ptr() + o * I * K;
      double ss = 0;
      for (std::int64_t c = 0; c < I; ++c) {
        const double sc = s.ptr()[b * I + c];
        for (std::int64_t k = 0; k < K; ++k) ss += (wp[c * K + k] * sc) * (wp[c * K + k] * sc);
      }
      const double sig = std::sqrt(ss + layer.eps);
      node->sigma[static_cast<std::size_t>(b * O + o)] = sig;
      T* op = out.mutable_ptr() + (b * O + o) * I * K;
      for (std::int64_t c = 0; c < I; ++c) {
        const double sc = s.ptr()[b * I + c];
        for (std::int64_t k = 0; k < K; ++k) op[c * K + k] = static_cast<T>(wp[c * K + k] * sc / sig);
      }
    }
  node->inputs = {layer.weight, s};
  return unbatch(record(out, std::shared_ptr<Node<T>>(node)), d, single);
}

template <typename T>
Tensor<T> decompose_weight(const DecompLayer<T>& layer, const Tensor<T>& style) {
  const auto& d = layer.dims;
  if (layer.u.shape() != Shape{d.out, d.in} || layer.v.shape() != Shape{d.flat_in(), d.in})
    throw DimensionError("decompose_weight: U " + shape_str(layer.u.shape()) + " / V " + shape_str(layer.v.shape()) +
                         " inconsistent with kernel " + shape_str(d.shape()));
  auto [s, single] = batched_style(style, d.in, "decompose_weight");
  const auto B = s.dim(0), O = d.out, I = d.in, N = d.flat_in();
  Tensor<T> out({B, O, I, d.kh, d.kw});
  Eigen::Map<const RowMat<T>> U(layer.u.ptr(), O, I), V(layer.v.ptr(), N, I), S(s.ptr(), B, I);
  for (std::int64_t b = 0; b < B; ++b) {
    Eigen::Map<RowMat<T>> W(out.mutable_ptr() + b * O * N, O, N);
    W.noalias() = (U * S.row(b).asDiagonal()) * V.transpose();
  }
  auto node = std::make_shared<DecompNode<T>>();
  node->dims = d;
  node->inputs = {layer.u, layer.v, s};
  return unbatch(record(out, std::shared_ptr<Node<T>>(node)), d, single);
}

template <typename T>
Tensor<T> effective_weight(const StyledLayer<T>& layer, const Tensor<T>& style) {
  return std::visit(
      [&](const auto& l) -> Tensor<T> {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, DemodLayer<T>>)
          return demodulate(l, style);
        else
          return decompose_weight(l, style);
      },
      layer);
}

template <typename T>
Tensor<T> ortho_penalty(const DecompLayer<T>& layer, T alpha) {
  if (!layer.ortho_regularized) throw ContractError("ortho_penalty on a layer without orthogonal regularization");
  auto deviation = [](const Tensor<T>& m) {
    const auto k = m.dim(1);
    Tensor<T> eye({k, k});
    for (std::int64_t i = 0; i < k; ++i) eye.mutable_ptr()[i * k + i] = T(1);
    auto diff = ops::sub(ops::matmul(ops::transpose(m), m), eye);
    return ops::sum(ops::mul(diff, diff));
  };
  return ops::scale(ops::add(deviation(layer.u), deviation(layer.v)), alpha);
}

template <typename T>
double gram_deviation(const Tensor<T>& m) {
  const auto r = m.dim(0), c = m.dim(1);
  Eigen::Map<const RowMat<T>> M(m.ptr(), r, c);
  Eigen::MatrixXd Md = M.template cast<double>();
  Eigen::MatrixXd G = Md.transpose() * Md - Eigen::MatrixXd::Identity(c, c);
  return G.squaredNorm();
}

template <typename T>
Tensor<T> modulated_conv_forward(const Tensor<T>& x, const StyledLayer<T>& layer, const AffineStyle<T>& affine,
                                 const Tensor<T>& w_latent) {
  const KernelDims& d = std::visit([](const auto& l) -> const KernelDims& { return l.dims; }, layer);
  if (d.kh % 2 == 0 || d.kw % 2 == 0) throw DimensionError("modulated conv needs odd kernel extents");
  auto style = affine(w_latent);
  if (style.dim(0) != x.dim(0)) {
    if (style.dim(0) != 1)
      throw DimensionError("modulated conv: latent batch " + std::to_string(style.dim(0)) + " vs input batch " +
                           std::to_string(x.dim(0)));
    style = ops::repeat_batch(style, x.dim(0));
  }
  auto weight = effective_weight(layer, style);
  return ops::conv2d(x, weight, static_cast<int>((d.kh - 1) / 2));
}

DemodFactors demod_diag_factors(const DemodLayer<double>& layer, std::span<const double> style) {
  const auto& d = layer.dims;
  if (static_cast<std::int64_t>(style.size()) != d.in)
    throw DimensionError("demod_diag_factors: style length " + std::to_string(style.size()) + " != " +
                         std::to_string(d.in));
  const auto K = d.kh * d.kw;
  DemodFactors f;
  f.b.resize(static_cast<std::size_t>(d.flat_in()));
  // Position n of the flattened input axis belongs to channel n / (h*w).
  for (std::int64_t n = 0; n < d.flat_in(); ++n) f.b[static_cast<std::size_t>(n)] = style[static_cast<std::size_t>(n / K)];
  f.a.resize(static_cast<std::size_t>(d.out));
  for (std::int64_t o = 0; o < d.out; ++o) {
    double ss = 0;
    for (std::int64_t n = 0; n < d.flat_in(); ++n) {
      const double m = layer.weight[o * d.flat_in() + n] * f.b[static_cast<std::size_t>(n)];
      ss += m * m;
    }
    f.a[static_cast<std::size_t>(o)] = 1.0 / std::sqrt(ss + layer.eps);
  }
  return f;
}

std::vector<double> apply_demod_factors(const DemodFactors& f, const DemodLayer<double>& layer) {
  const auto& d = layer.dims;
  Eigen::Map<const RowMat<double>> What(layer.weight.ptr(), d.out, d.flat_in());
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(f.a.data(), static_cast<Eigen::Index>(f.a.size()));
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.b.data(), static_cast<Eigen::Index>(f.b.size()));
  Eigen::MatrixXd A = a.asDiagonal();
  Eigen::MatrixXd B = b.asDiagonal();
  RowMat<double> prod = A * What * B;
  return {prod.data(), prod.data() + prod.size()};
}

SensitivityReport perturb_report(const StyledLayer<double>& layer, std::span<const double> style, std::int64_t channel,
                                 double delta) {
  NoGradGuard no_grad;
  const KernelDims& d = std::visit([](const auto& l) -> const KernelDims& { return l.dims; }, layer);
  if (static_cast<std::int64_t>(style.size()) != d.in)
    throw DimensionError("perturb_report: style length " + std::to_string(style.size()) + " != " + std::to_string(d.in));
  if (channel < 0 || channel >= d.in)
    throw std::out_of_range("perturb_report: channel " + std::to_string(channel) + " outside [0, " +
                            std::to_string(d.in) + ")");
  Tensor<double> s0({d.in}, std::vector<double>(style.begin(), style.end()));
  Tensor<double> s1 = s0.clone();
  s1.mutable_data()[static_cast<std::size_t>(channel)] += delta;
  auto w0 = effective_weight(layer, s0);
  auto w1 = effective_weight(layer, s1);

  SensitivityReport r;
  r.scheme = std::holds_alternative<DemodLayer<double>>(layer) ? ModScheme::demod : ModScheme::decomp;
  r.channel = channel;
  r.delta = delta;
  r.rows = d.out;
  r.cols = d.flat_in();
  r.delta_w.resize(static_cast<std::size_t>(r.rows * r.cols));
  std::int64_t changed = 0;
  for (std::size_t i = 0; i < r.delta_w.size(); ++i) {
    r.delta_w[i] = w1.data()[i] - w0.data()[i];
    if (std::abs(r.delta_w[i]) > 1e-12) ++changed;
  }
  r.changed_fraction = static_cast<double>(changed) / static_cast<double>(r.delta_w.size());
  Eigen::Map<const RowMat<double>> dw(r.delta_w.data(), r.rows, r.cols);
  r.frobenius = dw.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dw);
  const auto& sv = svd.singularValues();
  r.singular_values.assign(sv.data(), sv.data() + sv.size());
  const double tol = 1e-9 * std::max(1.0, r.singular_values.empty() ? 0.0 : r.singular_values.front());
  r.numerical_rank = std::count_if(r.singular_values.begin(), r.singular_values.end(), [&](double v) { return v > tol; });
  return r;
}

void orthonormalize(std::span<double> m, std::int64_t rows, std::int64_t cols) {
  if (static_cast<std::int64_t>(m.size()) != rows * cols) throw DimensionError("orthonormalize: size mismatch");
  const bool by_cols = rows >= cols;
  const auto count = by_cols ? cols : rows;
  const auto len = by_cols ? rows : cols;
  auto at = [&](std::int64_t vec, std::int64_t k) -> double& {
    return by_cols ? m[static_cast<std::size_t>(k * cols + vec)] : m[static_cast<std::size_t>(vec * cols + k)];
  };
  for (std::int64_t j = 0; j < count; ++j) {
    for (std::int64_t p = 0; p < j; ++p) {
      double dot = 0;
      for (std::int64_t k = 0; k < len; ++k) dot += at(j, k) * at(p, k);
      for (std::int64_t k = 0; k < len; ++k) at(j, k) -= dot * at(p, k);
    }
    double norm = 0;
    for (std::int64_t k = 0; k < len; ++k) norm += at(j, k) * at(j, k);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("orthonormalize: linearly dependent vectors");
    for (std::int64_t k = 0; k < len; ++k) at(j, k) /= norm;
  }
}

namespace {

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.mutable_data()) v = static_cast<T>(nd(rng));
  return t;
}

template <typename T>
Tensor<T> factor_init(std::int64_t rows, std::int64_t cols, bool orthonormal, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  std::vector<double> m(static_cast<std::size_t>(rows * cols));
  for (auto& v : m) v = nd(rng);
  if (orthonormal) orthonormalize(m, rows, cols);
  return Tensor<T>({rows, cols}, std::vector<T>(m.begin(), m.end()));
}

}  // namespace

template <typename T>
AffineStyle<T> make_affine(ParameterSet<T>& params, const std::string& name, std::int64_t w_dim,
                           std::int64_t channels, std::mt19937_64& rng) {
  AffineStyle<T> a;
  a.weight = params.add(name + ".weight", normal_tensor<T>({w_dim, channels}, 0.01, rng));
  a.bias = params.add(name + ".bias", Tensor<T>({channels}, T(1)));
  return a;
}

template <typename T>
DemodLayer<T> make_demod_layer(ParameterSet<T>& params, const std::string& name, KernelDims dims,
                               std::mt19937_64& rng) {
  DemodLayer<T> l;
  l.dims = dims;
  l.weight = params.add(name + ".weight", normal_tensor<T>(dims.shape(), 1.0, rng));
  return l;
}

template <typename T>
DecompLayer<T> make_decomp_layer(ParameterSet<T>& params, const std::string& name, KernelDims dims,
                                 bool ortho_regularized, FactorInit init, std::mt19937_64& rng) {
  DecompLayer<T> l;
  l.dims = dims;
  l.ortho_regularized = ortho_regularized;
  const bool ortho_init = init == FactorInit::orthonormal;
  l.u = params.add(name + ".u", factor_init<T>(dims.out, dims.in, ortho_init, rng));
  l.v = params.add(name + ".v", factor_init<T>(dims.flat_in(), dims.in, ortho_init, rng));
  return l;
}

#define STWO_INSTANTIATE_STYLEMOD(T)                                                                          \
  template struct AffineStyle<T>;                                                                             \
  template Tensor<T> demodulate(const DemodLayer<T>&, const Tensor<T>&);                                      \
  template Tensor<T> decompose_weight(const DecompLayer<T>&, const Tensor<T>&);                               \
  template Tensor<T> effective_weight(const StyledLayer<T>&, const Tensor<T>&);                               \
  template Tensor<T> ortho_penalty(const DecompLayer<T>&, T);                                                 \
  template double gram_deviation(const Tensor<T>&);                                                           \
  template Tensor<T> modulated_conv_forward(const Tensor<T>&, const StyledLayer<T>&, const AffineStyle<T>&,   \
                                            const Tensor<T>&);                                                \
  template AffineStyle<T> make_affine(ParameterSet<T>&, const std::string&, std::int64_t, std::int64_t,       \
                                      std::mt19937_64&);                                                      \
  template DemodLayer<T> make_demod_layer(ParameterSet<T>&, const std::string&, KernelDims, std::mt19937_64&); \
  template DecompLayer<T> make_decomp_layer(ParameterSet<T>&, const std::string&, KernelDims, bool,           \
                                            FactorInit, std::mt19937_64&);

STWO_INSTANTIATE_STYLEMOD(float)
STWO_INSTANTIATE_STYLEMOD(double)

}  // namespace stwo
