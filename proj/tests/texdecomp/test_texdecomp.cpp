#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "stwo/ops.hpp"
#include "stwo/texdecomp.hpp"
#include "support/dense_rtv.hpp"
#include "support/finite_diff.hpp"

using namespace stwo;
using stwo::testing::dense_rtv;

namespace {

// Vertical step 0.3 | 0.7 plus a horizontal sinusoid of period 4 px, amplitude 0.2.
Planar step_with_ripple(std::int64_t size, double amp) {
  Planar img(1, size, size);
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x)
      img.at(0, y, x) = (x < size / 2 ? 0.3 : 0.7) + amp * std::sin(2 * std::numbers::pi * x / 4.0 + 0.5);
  return img;
}

// Difference of the plateau means away from the edge, columns [w/8, 3w/8) and [5w/8, 7w/8).
double step_jump(const Planar& s) {
  const auto w = s.width;
  double left = 0, right = 0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y < s.height; ++y)
    for (std::int64_t x = w / 8; x < 3 * w / 8; ++x, ++count) {
      left += s.at(0, y, x);
      right += s.at(0, y, x + w / 2);
    }
  return (right - left) / count;
}

double energy(const Planar& p) {
  double e = 0;
  for (auto v : p.data) e += v * v;
  return e;
}

Planar random_image(std::mt19937_64& rng, std::int64_t c, std::int64_t h, std::int64_t w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Planar p(c, h, w);
  for (auto& v : p.data) v = u(rng);
  return p;
}

}  // namespace

TEST_CASE("gaussian filter keeps constants and normalises") {
  Planar c(2, 9, 11, 0.42);
  auto f = gaussian_filter(c, 3.0);
  for (auto v : f.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("constant image has no texture") {
  Planar c(3, 16, 16, 0.6);
  auto d = rtv_decompose(c);
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    CHECK(std::abs(d.structure.data[i] - 0.6) < 1e-6);
    CHECK(std::abs(d.texture.data[i]) < 1e-6);
  }
}

TEST_CASE("lambda = 0 leaves the image untouched") {
  std::mt19937_64 rng(1);
  auto img = random_image(rng, 3, 12, 10);
  DecompositionParams p;
  p.lambda = 0;
  auto d = rtv_decompose(img, p);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    CHECK(d.structure.data[i] == img.data[i]);
    CHECK(d.texture.data[i] == 0.0);
  }
}

TEST_CASE("structure plus texture reconstructs the input") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    auto img = random_image(rng, 3, 16, 16);
    for (auto method : {DecompMethod::rtv, DecompMethod::blur}) {
      auto d = decompose(img, method);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(d.structure.data[i] + d.texture.data[i] - img.data[i]) < 1e-12);
    }
  }
}

TEST_CASE("weights on a flat image use both floors") {
  Planar c(1, 8, 8, 0.5);
  DecompositionParams p;
  auto w = rtv_weights(c, 3.0, p);
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) {
      CHECK(w.wx[y * 8 + x] == doctest::Approx(x < 7 ? 1.0 / (0.02 * 1e-3) : 0.0));
      CHECK(w.wy[y * 8 + x] == doctest::Approx(y < 7 ? 1.0 / (0.02 * 1e-3) : 0.0));
    }
}

TEST_CASE("sparse system matches dense assembly and CG meets its tolerance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    const std::int64_t H = 6 + trial % 3, W = 7;
    EdgeWeights w{H, W, std::vector<double>(H * W), std::vector<double>(H * W)};
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        w.wx[y * W + x] = x + 1 < W ? u(rng) : 0.0;
        w.wy[y * W + x] = y + 1 < H ? u(rng) : 0.0;
      }
    auto a = make_system(w, 0.7);
    const auto N = H * W;
    Eigen::MatrixXd dense(N, N);
    std::vector<double> e(N), col(N);
    for (std::int64_t j = 0; j < N; ++j) {
      std::fill(e.begin(), e.end(), 0.0);
      e[j] = 1.0;
      a.apply(e, col);
      for (std::int64_t i = 0; i < N; ++i) dense(i, j) = col[i];
    }
    CHECK((dense - dense.transpose()).norm() == 0.0);
    for (auto d : a.diag) CHECK(d > 0);
    CHECK(dense.llt().info() == Eigen::Success);

    std::vector<double> b(N), x(N, 0.0), ax(N);
    for (auto& v : b) v = u(rng) - 2.5;
    auto res = cg_solve(a, b, x, 1e-5, 200);
    a.apply(x, ax);
    double rn = 0, bn = 0;
    for (std::int64_t i = 0; i < N; ++i) rn += (b[i] - ax[i]) * (b[i] - ax[i]), bn += b[i] * b[i];
    CHECK(std::sqrt(rn) < 1e-5 * std::sqrt(bn));
    CHECK(res.residual == doctest::Approx(std::sqrt(rn)).epsilon(1e-6));
  }
}

TEST_CASE("CG reports non-convergence as a numeric error") {
  std::mt19937_64 rng(4);
  auto img = random_image(rng, 1, 16, 16);
  auto a = make_system(rtv_weights(img, 3.0, DecompositionParams{}), 0.005);
  std::vector<double> b(img.data), x(b.size(), 0.0);
  CHECK_THROWS_AS(cg_solve(a, b, x, 1e-12, 1), NumericError);
}

TEST_CASE("CG solution agrees with the dense direct oracle") {
  std::mt19937_64 rng(5);
  auto img = random_image(rng, 2, 12, 12);
  DecompositionParams p;
  p.cg_tol = 1e-10;
  p.cg_max_iter = 2000;
  auto d = rtv_decompose(img, p);
  auto ref = dense_rtv(img, p);
  double worst = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) worst = std::max(worst, std::abs(d.structure.data[i] - ref.data[i]));
  CHECK(worst < 1e-7);
}

TEST_CASE("default-parameter solve on a 32 x 32 image matches the dense oracle") {
  std::mt19937_64 rng(8);
  auto img = random_image(rng, 3, 32, 32);
  auto d = rtv_decompose(img);
  CHECK(stwo::testing::relative_l2(d.structure, dense_rtv(img, DecompositionParams{})) < 1e-3);
}

TEST_CASE("step edge keeps its jump in structure; ripple moves into texture") {
  auto img = step_with_ripple(32, 0.2);
  auto clean = step_with_ripple(32, 0.0);
  auto ref = dense_rtv(img, DecompositionParams{});
  auto d = rtv_decompose(img);
  const double jump = step_jump(clean);
  for (const Planar* s : {&ref, &d.structure}) {
    CHECK(std::abs(step_jump(*s) - jump) < 0.1 * jump);
    // Texture energy concentrates on the ripple: correlation with it is high.
    double tr = 0, tt = 0, rr = 0;
    for (std::int64_t y = 0; y < 32; ++y)
      for (std::int64_t x = 0; x < 32; ++x) {
        const double t = img.at(0, y, x) - s->at(0, y, x);
        const double r = img.at(0, y, x) - clean.at(0, y, x);
        tr += t * r, tt += t * t, rr += r * r;
      }
    CHECK(tr / std::sqrt(tt * rr) > 0.9);
  }
}

TEST_CASE("decomposing the structure again leaves little texture") {
  auto img = step_with_ripple(32, 0.2);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto& v : img.data) v += nd(rng);
  auto first = rtv_decompose(img);
  auto second = rtv_decompose(first.structure);
  CHECK(energy(second.texture) <= 0.1 * energy(first.texture));
}

TEST_CASE("real pyramid bookkeeping") {
  std::mt19937_64 rng(7);
  auto images = testing::random_tensor(rng, {2, 3, 64, 64}, 0.3);
  auto pyr = build_real_pyramid(images, 6, 4);
  CHECK(pyr.rgb.size() == 2);
  CHECK(pyr.rgb.count(5) == 1);
  CHECK(pyr.rgb.count(6) == 1);
  CHECK(pyr.texture.size() == 2);
  CHECK(pyr.texture.at(3).shape() == Shape{2, 3, 8, 8});
  CHECK(pyr.texture.at(4).shape() == Shape{2, 3, 16, 16});
  auto down = ops::downsample2x(pyr.rgb.at(6));
  for (std::int64_t i = 0; i < down.numel(); ++i) CHECK(down[i] == pyr.rgb.at(5)[i]);
  for (const auto& [res, t] : pyr.texture)
    for (auto v : t.data()) CHECK((v >= -1.0 && v <= 1.0));

  Tensor<double> flat({2, 3, 64, 64}, 0.25);
  auto fp = build_real_pyramid(flat, 6, 4);
  for (const auto& [res, t] : fp.texture)
    for (auto v : t.data()) CHECK(std::abs(v) < 1e-6);

  CHECK_THROWS_AS(build_real_pyramid(flat, 4, 4), ConfigError);
  CHECK_THROWS_AS(build_real_pyramid(flat, 5, 4), DimensionError);

  auto msg = build_rgb_pyramid(images, 6, 4);
  CHECK(msg.rgb.size() == 4);
  CHECK(msg.rgb.at(3).shape() == Shape{2, 3, 8, 8});
}
