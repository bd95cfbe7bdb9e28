#include "stwo/texdecomp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stwo/errors.hpp"
#include "stwo/ops.hpp"

namespace stwo {

void DecompositionParams::validate() const {
  if (!(lambda >= 0) || !(sigma > 0) || !(sharpness_eps > 0) || !(texture_eps > 0) || max_iter < 1 ||
      !(cg_tol > 0) || cg_max_iter < 1)
    throw ConfigError("invalid decomposition parameters");
}

namespace {

// Mirror with the edge sample repeated: -1 -> 0, n -> n-1.
std::int64_t mirror(std::int64_t i, std::int64_t n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto size = static_cast<std::int64_t>(std::lround(5 * sigma)) | 1;
  const double c = (size - 1) / 2.0;
  std::vector<double> k(static_cast<std::size_t>(size));
  double total = 0;
  for (std::int64_t i = 0; i < size; ++i) total += k[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : k) v /= total;
  return k;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_image(const Planar& img) {
  if (img.channels < 1 || img.height < 2 || img.width < 2 || img.data.size() != static_cast<std::size_t>(img.channels * img.plane()))
    throw DimensionError("decomposition needs a non-empty planar image");
}

}  // namespace

Planar gaussian_filter(const Planar& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const auto half = static_cast<std::int64_t>(k.size() / 2);
  Planar tmp(img.channels, img.height, img.width), out(img.channels, img.height, img.width);
  for (std::int64_t c = 0; c < img.channels; ++c) {
    for (std::int64_t y = 0; y < img.height; ++y)
      for (std::int64_t x = 0; x < img.width; ++x) {
        double s = 0;
        for (std::int64_t t = -half; t <= half; ++t) s += k[t + half] * img.at(c, y, mirror(x + t, img.width));
        tmp.at(c, y, x) = s;
      }
    for (std::int64_t y = 0; y < img.height; ++y)
      for (std::int64_t x = 0; x < img.width; ++x) {
        double s = 0;
        for (std::int64_t t = -half; t <= half; ++t) s += k[t + half] * tmp.at(c, mirror(y + t, img.height), x);
        out.at(c, y, x) = s;
      }
  }
  return out;
}

EdgeWeights rtv_weights(const Planar& x, double sigma, const DecompositionParams& p) {
  const auto H = x.height, W = x.width, C = x.channels;
  const Planar blurred = gaussian_filter(x, sigma);
  EdgeWeights w{H, W, std::vector<double>(static_cast<std::size_t>(H * W)), std::vector<double>(static_cast<std::size_t>(H * W))};
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t i = 0; i < W; ++i) {
      double mag = 0, bx = 0, by = 0;
      for (std::int64_t c = 0; c < C; ++c) {
        const double fx = i + 1 < W ? x.at(c, y, i + 1) - x.at(c, y, i) : 0.0;
        const double fy = y + 1 < H ? x.at(c, y + 1, i) - x.at(c, y, i) : 0.0;
        mag += std::sqrt(fx * fx + fy * fy);
        bx += i + 1 < W ? std::abs(blurred.at(c, y, i + 1) - blurred.at(c, y, i)) : 0.0;
        by += y + 1 < H ? std::abs(blurred.at(c, y + 1, i) - blurred.at(c, y, i)) : 0.0;
      }
      const double wto = 1.0 / std::max(mag / C, p.sharpness_eps);
      const auto idx = static_cast<std::size_t>(y * W + i);
      w.wx[idx] = i + 1 < W ? wto / std::max(bx / C, p.texture_eps) : 0.0;
      w.wy[idx] = y + 1 < H ? wto / std::max(by / C, p.texture_eps) : 0.0;
    }
  return w;
}

SparseSystem make_system(const EdgeWeights& w, double lambda) {
  const auto H = w.height, W = w.width;
  SparseSystem a{H, W, std::vector<double>(static_cast<std::size_t>(H * W), 1.0), {}, {}};
  a.east.resize(a.diag.size());
  a.south.resize(a.diag.size());
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const auto i = static_cast<std::size_t>(y * W + x);
      const double ex = lambda * w.wx[i], sy = lambda * w.wy[i];
      a.east[i] = -ex;
      a.south[i] = -sy;
      a.diag[i] += ex + sy;
      if (x + 1 < W) a.diag[i + 1] += ex;
      if (y + 1 < H) a.diag[i + static_cast<std::size_t>(W)] += sy;
    }
  return a;
}

void SparseSystem::apply(std::span<const double> x, std::span<double> y) const {
  const auto W = static_cast<std::size_t>(width), N = diag.size();
  for (std::size_t i = 0; i < N; ++i) y[i] = diag[i] * x[i];
  for (std::size_t i = 0; i < N; ++i) {
    if (i % W + 1 < W) {
      y[i] += east[i] * x[i + 1];
      y[i + 1] += east[i] * x[i];
    }
    if (i + W < N) {
      y[i] += south[i] * x[i + W];
      y[i + W] += south[i] * x[i];
    }
  }
}

CgResult cg_solve(const SparseSystem& a, std::span<const double> b, std::span<double> x, double tol, int max_iter) {
  const std::size_t N = a.diag.size();
  std::vector<double> r(N), z(N), p(N), q(N);
  a.apply(x, r);
  for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
  const double target = tol * std::sqrt(dot(b, b));
  double rnorm = std::sqrt(dot(r, r));
  CgResult res;
  if (rnorm <= target) {
    res.residual = rnorm;
    return res;
  }
  for (std::size_t i = 0; i < N; ++i) p[i] = z[i] = r[i] / a.diag[i];
  double rz = dot(r, z);
  for (int it = 1; it <= max_iter; ++it) {
    a.apply(p, q);
    const double alpha = rz / dot(p, q);
    for (std::size_t i = 0; i < N; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    rnorm = std::sqrt(dot(r, r));
    res = {it, rnorm};
    if (rnorm <= target) return res;
    for (std::size_t i = 0; i < N; ++i) z[i] = r[i] / a.diag[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
  }
  std::ostringstream msg;
  msg << "conjugate gradient did not converge in " << max_iter << " iterations: residual " << rnorm << " > "
      << target;
  throw NumericError(msg.str());
}

Decomposition rtv_decompose(const Planar& img, const DecompositionParams& p) {
  check_image(img);
  p.validate();
  Decomposition out;
  out.structure = img;
  // The reference formulation halves lambda and sigma on entry / per round.
  const double lambda = p.lambda / 2.0;
  double sigma = p.sigma;
  const auto plane = static_cast<std::size_t>(img.plane());
  for (int iter = 0; iter < p.max_iter; ++iter) {
    const auto system = make_system(rtv_weights(out.structure, sigma, p), lambda);
    for (std::int64_t c = 0; c < img.channels; ++c) {
      std::span<const double> rhs(img.data.data() + c * plane, plane);
      std::span<double> x(out.structure.data.data() + c * plane, plane);
      std::copy(rhs.begin(), rhs.end(), x.begin());
      out.cg_iterations += cg_solve(system, rhs, x, p.cg_tol, p.cg_max_iter).iterations;
    }
    sigma = std::max(sigma / 2.0, 0.5);
  }
  out.texture = img;
  for (std::size_t i = 0; i < img.data.size(); ++i) out.texture.data[i] -= out.structure.data[i];
  return out;
}

Decomposition blur_decompose(const Planar& img, double sigma) {
  check_image(img);
  Decomposition out;
  out.structure = gaussian_filter(img, sigma);
  out.texture = img;
  for (std::size_t i = 0; i < img.data.size(); ++i) out.texture.data[i] -= out.structure.data[i];
  return out;
}

Decomposition decompose(const Planar& img, DecompMethod method, const DecompositionParams& p) {
  return method == DecompMethod::rtv ? rtv_decompose(img, p) : blur_decompose(img);
}

template <typename T>
Planar to_planar(const Tensor<T>& batch, std::int64_t index) {
  if (batch.ndim() != 4 || index < 0 || index >= batch.dim(0))
    throw DimensionError("to_planar: bad batch " + shape_str(batch.shape()) + " / index " + std::to_string(index));
  Planar p(batch.dim(1), batch.dim(2), batch.dim(3));
  const T* src = batch.ptr() + index * static_cast<std::int64_t>(p.data.size());
  std::copy(src, src + p.data.size(), p.data.begin());
  return p;
}

template <typename T>
void write_planar(const Planar& img, Tensor<T>& batch, std::int64_t index) {
  if (batch.ndim() != 4 || batch.dim(1) != img.channels || batch.dim(2) != img.height || batch.dim(3) != img.width)
    throw DimensionError("write_planar: image does not fit batch " + shape_str(batch.shape()));
  T* dst = batch.mutable_ptr() + index * static_cast<std::int64_t>(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = static_cast<T>(img.data[i]);
}

namespace {

template <typename T>
void check_images(const Tensor<T>& images, int n) {
  const std::int64_t side = std::int64_t{1} << n;
  if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != side || images.dim(3) != side)
    throw DimensionError("expected b x 3 x " + std::to_string(side) + " x " + std::to_string(side) + " images, got " +
                         shape_str(images.shape()));
}

}  // namespace

template <typename T>
ImagePyramid<T> build_rgb_pyramid(const Tensor<T>& images, int n, int r, int lowest) {
  check_levels(n, r);
  check_images(images, n);
  NoGradGuard ng;
  ImagePyramid<T> pyr;
  pyr.n = n;
  pyr.r = r;
  pyr.rgb[n] = images.detach();
  for (int res = n - 1; res >= lowest; --res) pyr.rgb[res] = ops::downsample2x(pyr.rgb[res + 1]);
  return pyr;
}

template <typename T>
ImagePyramid<T> build_real_pyramid(const Tensor<T>& images, int n, int r, DecompMethod method,
                                   const DecompositionParams& p) {
  auto pyr = build_rgb_pyramid(images, n, r, r);
  NoGradGuard ng;
  const Tensor<T> base = pyr.rgb.at(r);
  pyr.rgb.erase(r);
  Tensor<T> tex(base.shape());
  for (std::int64_t b = 0; b < base.dim(0); ++b) {
    Planar img = to_planar(base, b);
    for (auto& v : img.data) v = (v + 1.0) / 2.0;
    Planar t = decompose(img, method, p).texture;
    for (auto& v : t.data) v = std::clamp(2.0 * v, -1.0, 1.0);
    write_planar(t, tex, b);
  }
  pyr.texture[r] = tex;
  for (int res = r - 1; res >= 3; --res) pyr.texture[res] = ops::downsample2x(pyr.texture[res + 1]);
  return pyr;
}

#define STWO_INSTANTIATE_TEXDECOMP(T)                                                                    \
  template Planar to_planar<T>(const Tensor<T>&, std::int64_t);                                          \
  template void write_planar<T>(const Planar&, Tensor<T>&, std::int64_t);                                \
  template ImagePyramid<T> build_rgb_pyramid<T>(const Tensor<T>&, int, int, int);                        \
  template ImagePyramid<T> build_real_pyramid<T>(const Tensor<T>&, int, int, DecompMethod,               \
                                                 const DecompositionParams&);

STWO_INSTANTIATE_TEXDECOMP(float)
STWO_INSTANTIATE_TEXDECOMP(double)

}  // namespace stwo
