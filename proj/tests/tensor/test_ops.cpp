#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "stwo/ops.hpp"
#include "support/finite_diff.hpp"

using namespace stwo;
using stwo::testing::random_tensor;

namespace {

// Direct seven-loop cross-correlation; the reference the GEMM path must agree with.
Tensor<double> conv_direct(const Tensor<double>& x, const Tensor<double>& w, int pad) {
  const bool per_sample = w.ndim() == 5;
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int o0 = per_sample ? 1 : 0;
  const auto O = w.dim(o0), KH = w.dim(o0 + 2), KW = w.dim(o0 + 3);
  const auto Ho = H + 2 * pad - KH + 1, Wo = W + 2 * pad - KW + 1;
  Tensor<double> y({B, O, Ho, Wo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < KH; ++i)
              for (std::int64_t j = 0; j < KW; ++j) {
                auto iy = oy + i - pad, ix = ox + j - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                auto widx = (((per_sample ? b * O : 0) + o) * C + c) * KH * KW + i * KW + j;
                acc += w[widx] * x[((b * C + c) * H + iy) * W + ix];
              }
          y.mutable_data()[static_cast<std::size_t>(((b * O + o) * Ho + oy) * Wo + ox)] = acc;
        }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul identity and analytic product") {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  auto p = ops::matmul(a, eye);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 2, 3, 4});
  auto q = ops::matmul(a, Tensor<double>({2, 1}, {1, 1}));
  CHECK(q.shape() == Shape{2, 1});
  CHECK(q[0] == 3);
  CHECK(q[1] == 7);
  CHECK_THROWS_AS(ops::matmul(a, Tensor<double>({3, 1})), DimensionError);
}

TEST_CASE("conv2d with a 1x1 kernel scales each channel pair") {
  std::mt19937_64 rng(3);
  auto x = random_tensor(rng, {2, 3, 4, 5});
  auto w = random_tensor(rng, {2, 3, 1, 1});
  auto y = ops::conv2d(x, w, 0);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t o = 0; o < 2; ++o)
      for (std::int64_t p = 0; p < 20; ++p) {
        double expect = 0;
        for (std::int64_t c = 0; c < 3; ++c) expect += w[o * 3 + c] * x[(b * 3 + c) * 20 + p];
        CHECK(y[(b * 2 + o) * 20 + p] == doctest::Approx(expect).epsilon(1e-14));
      }
}

TEST_CASE("conv2d zero padding counts on a constant image") {
  Tensor<double> x({1, 1, 5, 5}, 1.0);
  Tensor<double> w({1, 1, 3, 3}, 1.0);
  auto y = ops::conv2d(x, w, 1);
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  CHECK(y[0] == 4);
  CHECK(y[4] == 4);
  CHECK(y[20] == 4);
  CHECK(y[24] == 4);
  CHECK(y[2] == 6);
  for (int r = 1; r < 4; ++r)
    for (int c = 1; c < 4; ++c) CHECK(y[r * 5 + c] == 9);
}

TEST_CASE("conv2d GEMM path matches the direct loop oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ext(1, 6);
    const std::int64_t b = ext(rng) % 3 + 1, c = ext(rng), o = ext(rng), H = ext(rng) + 2, W = ext(rng) + 2;
    const std::int64_t k = (seed % 3 == 0) ? 1 : 3;
    const int pad = static_cast<int>((k - 1) / 2);
    auto x = random_tensor(rng, {b, c, H, W});
    auto w = random_tensor(rng, {o, c, k, k});
    CHECK(max_abs_diff(ops::conv2d(x, w, pad), conv_direct(x, w, pad)) < 1e-12);
    auto wb = random_tensor(rng, {b, o, c, k, k});
    CHECK(max_abs_diff(ops::conv2d(x, wb, pad), conv_direct(x, wb, pad)) < 1e-12);
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  CHECK_THROWS_AS(ops::conv2d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({3, 3, 3, 3}), 1), DimensionError);
  CHECK_THROWS_AS(ops::conv2d(Tensor<double>({2, 2, 4, 4}), Tensor<double>({3, 3, 2, 3, 3}), 1), DimensionError);
}

TEST_CASE("resample up, down and their composition") {
  auto up = ops::upsample2x(Tensor<double>({1, 1, 1, 1}, {1}));
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(up[i] == 1);
  auto down = ops::downsample2x(Tensor<double>({1, 1, 2, 2}, {1, 3, 5, 7}));
  CHECK(down.shape() == Shape{1, 1, 1, 1});
  CHECK(down[0] == 4);

  std::mt19937_64 rng(11);
  auto x = random_tensor(rng, {1, 2, 8, 8});
  CHECK(max_abs_diff(ops::downsample2x(ops::upsample2x(x)), x) == 0);
  CHECK_THROWS_AS(ops::downsample2x(Tensor<double>({1, 1, 3, 4})), DimensionError);
}

TEST_CASE("activation and normalisation suite") {
  CHECK(ops::leaky_relu(Tensor<double>::scalar(-1.0)).item() == doctest::Approx(-0.2));
  CHECK(ops::leaky_relu(Tensor<double>::scalar(3.0)).item() == 3.0);

  for (double c : {5.0, -3.0, 0.5, 1e3}) {
    auto y = ops::rms_normalize(Tensor<double>({8}, c));
    for (auto v : y.data()) CHECK(std::abs(v - (c > 0 ? 1.0 : -1.0)) < 1e-4);
  }
  auto z = ops::rms_normalize(Tensor<double>({2, 4}, 0.0));
  for (auto v : z.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(5);
  auto a = random_tensor(rng, {2, 2, 3, 3});
  auto b = random_tensor(rng, {2, 3, 3, 3});
  auto cat = ops::concat_channels(a, b);
  CHECK(cat.shape() == Shape{2, 5, 3, 3});
  CHECK(max_abs_diff(ops::slice_channels(cat, 0, 2), a) == 0);
  CHECK(max_abs_diff(ops::slice_channels(cat, 2, 3), b) == 0);
  CHECK_THROWS_AS(ops::concat_channels(a, random_tensor(rng, {2, 3, 4, 3})), DimensionError);

  CHECK(ops::sum(Tensor<double>({2, 2}, {1, 2, 3, 4})).item() == 10);
  CHECK(ops::mean(Tensor<double>({2, 2}, {1, 2, 3, 4})).item() == 2.5);
  CHECK(ops::softplus(Tensor<double>::scalar(0.0)).item() == doctest::Approx(std::log(2.0)));
  CHECK(ops::softplus(Tensor<double>::scalar(800.0)).item() == doctest::Approx(800.0));
}

TEST_CASE("forward ops are deterministic") {
  std::mt19937_64 rng(9);
  auto x = random_tensor(rng, {2, 3, 8, 8});
  auto w = random_tensor(rng, {4, 3, 3, 3});
  auto y1 = ops::leaky_relu(ops::conv2d(x, w, 1));
  auto y2 = ops::leaky_relu(ops::conv2d(x, w, 1));
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

TEST_CASE("non-finite outputs are reported") {
  Tensor<double> x({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(ops::scale(x, 2.0), NumericError);
}

TEST_CASE("tensor buffers share one alignment so kernel results do not depend on the allocation") {
  std::mt19937_64 rng(17);
  for (std::int64_t n : {1, 3, 7, 100, 4097}) {
    auto t = random_tensor(rng, {n});
    CHECK(reinterpret_cast<std::uintptr_t>(t.ptr()) % kBufferAlign == 0);
    CHECK(reinterpret_cast<std::uintptr_t>(t.detach().ptr()) % kBufferAlign == 0);
    CHECK(reinterpret_cast<std::uintptr_t>(Tensor<float>({n}, 1.0f).ptr()) % kBufferAlign == 0);
  }
  // Products of odd-sized operands repeated many times with fresh allocations.
  auto a = random_tensor(rng, {37, 53}), b = random_tensor(rng, {53, 29});
  const auto first = ops::matmul(a, b);
  for (int i = 0; i < 20; ++i) {
    std::vector<Tensor<double>> noise;
    for (int k = 0; k <= i; ++k) noise.push_back(Tensor<double>({k + 1}));
    const auto again = ops::matmul(a.detach(), b.detach());
    CHECK(std::memcmp(again.ptr(), first.ptr(), static_cast<std::size_t>(first.numel()) * sizeof(double)) == 0);
  }
}
