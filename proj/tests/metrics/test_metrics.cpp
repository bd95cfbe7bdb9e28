#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "stwo/errors.hpp"
#include "stwo/metrics.hpp"
#include "stwo/ops.hpp"
#include "support/finite_diff.hpp"

using namespace stwo;

namespace {

NetConfig small_net(Arch arch = Arch::stia) {
  NetConfig c;
  c.n = 4;
  c.r = 3;
  c.z_dim = c.w_dim = 8;
  for (int res = 2; res <= 4; ++res) c.channels[res] = 8;
  c.arch = arch;
  return c;
}

// Random float weights with the affine maps spread so styles vary with w.
struct RandomModel {
  ParameterSet<float> params;
  std::unique_ptr<InferenceModel> model;

  explicit RandomModel(const NetConfig& cfg, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    Generator<float> g(cfg, params, rng);
    std::normal_distribution<float> nd(0.0f, 0.3f);
    for (auto& p : params.items())
      if (p.name.find(".affine.weight") != std::string::npos)
        for (auto& v : p.tensor.mutable_data()) v = nd(rng);
    model = std::make_unique<InferenceModel>(cfg, params);
  }
};

Latent random_latent(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Latent v(dim);
  for (auto& x : v) x = nd(rng);
  return v;
}

double dot(const Latent& a, const Latent& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool same_bits(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), static_cast<std::size_t>(a.numel()) * sizeof(double)) == 0;
}

Synthesizer constant_stub(bool split) {
  Synthesizer s;
  s.split = split;
  s.sample = [](std::mt19937_64& rng, int) { return random_latent(rng, 6); };
  s.render = [](const Latent&, const Latent&) { return Tensor<double>({1, 3, 8, 8}, 0.25); };
  return s;
}

}  // namespace

TEST_CASE("lerp endpoints and midpoint") {
  CHECK(lerp({1.5, -2.0}, {4.0, 6.0}, 0.0) == Latent{1.5, -2.0});
  CHECK(lerp({1.5, -2.0}, {4.0, 6.0}, 1.0) == Latent{4.0, 6.0});
  CHECK(lerp({0.0, 0.0}, {2.0, 2.0}, 0.5) == Latent{1.0, 1.0});
  std::mt19937_64 rng(0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_latent(rng, 16), b = random_latent(rng, 16);
    REQUIRE(lerp(a, b, 0.0) == a);
    const auto end = lerp(a, b, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(end[i] - b[i]) < 1e-15 * (1 + std::abs(a[i])));
  }
  CHECK_THROWS_AS(lerp({1.0}, {1.0, 2.0}, 0.5), DimensionError);
}

TEST_CASE("pyramid distance basics") {
  std::mt19937_64 rng(1);
  auto a = testing::random_tensor(rng, {2, 3, 8, 8}), b = testing::random_tensor(rng, {2, 3, 8, 8});
  CHECK(pyramid_distance(a, a) == 0.0);
  CHECK(pyramid_distance(a, b) == pyramid_distance(b, a));
  CHECK(pyramid_distance(a, b) > 0);
  CHECK_THROWS_AS(pyramid_distance(a, testing::random_tensor(rng, {2, 3, 8, 4})), DimensionError);
  CHECK_THROWS_AS(pyramid_distance(testing::random_tensor(rng, {3, 6, 6}), testing::random_tensor(rng, {3, 6, 6})),
                  DimensionError);
}

TEST_CASE("pyramid distance of a single differing pixel") {
  for (double delta : {0.5, -1.25}) {
    const std::int64_t H = 8, W = 16;
    Tensor<double> a({3, H, W}, 0.1);
    auto b = Tensor<double>({3, H, W}, 0.1);
    b.mutable_data()[static_cast<std::size_t>((1 * H + 5) * W + 9)] += delta;
    // Level k: one pooled pixel differs by delta / 4^k among 3 H W / 4^k values.
    double oracle = 0;
    for (int k = 0; k < 3; ++k) {
      const double scale = std::pow(4.0, k);
      oracle += (delta / scale) * (delta / scale) / (3.0 * H * W / scale);
    }
    CHECK(std::abs(pyramid_distance(a, b) - oracle) < 1e-15);
    CHECK(std::abs(pyramid_distance(a, b, 1) - delta * delta / (3.0 * H * W)) < 1e-15);
  }
}

TEST_CASE("pyramid distance matches pooling through the tensor ops") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = testing::random_tensor(rng, {1, 3, 16, 16}), b = testing::random_tensor(rng, {1, 3, 16, 16});
    double oracle = 0;
    auto x = a, y = b;
    for (int level = 0; level < 3; ++level) {
      if (level > 0) x = ops::downsample2x(x), y = ops::downsample2x(y);
      double sq = 0;
      for (std::int64_t i = 0; i < x.numel(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
      oracle += sq / static_cast<double>(x.numel());
    }
    CHECK(std::abs(pyramid_distance(a, b) - oracle) < 1e-12 * oracle);
  }
}

TEST_CASE("path length of a constant generator is zero") {
  for (auto space : {PplSpace::w, PplSpace::w1, PplSpace::w2, PplSpace::w1_orthogonal}) {
    PplConfig cfg;
    cfg.space = space;
    cfg.num_paths = 8;
    auto r = ppl(constant_stub(true), cfg);
    CHECK(r.value == 0.0);
    CHECK(r.std_error == 0.0);
  }
  CHECK(ppl_orthogonal(constant_stub(false), PplConfig{}).value == 0.0);
}

TEST_CASE("path length of a unit linear stub is one") {
  // g(w) = w[0] as a single pixel, endpoints alternate 0 and e1.
  Synthesizer s;
  s.split = false;
  auto calls = std::make_shared<int>(0);
  s.sample = [calls](std::mt19937_64&, int) {
    Latent w(4, 0.0);
    if ((*calls)++ % 2) w[0] = 1.0;
    return w;
  };
  s.render = [](const Latent& w1, const Latent&) { return Tensor<double>({1, 1, 1, 1}, w1[0]); };
  PplConfig cfg;
  cfg.space = PplSpace::w;
  cfg.distance_levels = 1;
  cfg.num_paths = 32;
  auto r = ppl(s, cfg);
  for (double v : r.samples) CHECK(std::abs(v - 1.0) < 1e-9);
  CHECK(std::abs(r.value - 1.0) < 1e-9);
}

TEST_CASE("orthogonal path length of a linear stub matches the closed form") {
  // g(w) = P.w as one pixel with w1 fixed: E[(P.d)^2] = |P_perp|^2 / (dim - 1).
  const std::size_t dim = 12;
  std::mt19937_64 prng(5);
  const auto P = random_latent(prng, dim);
  const auto fixed = random_latent(prng, dim);
  Synthesizer s;
  s.split = true;
  s.sample = [fixed](std::mt19937_64&, int) { return fixed; };
  s.render = [P](const Latent& w1, const Latent&) { return Tensor<double>({1, 1, 1, 1}, dot(P, w1)); };
  PplConfig cfg;
  cfg.distance_levels = 1;
  cfg.num_paths = 4000;
  cfg.seed = 9;
  auto r = ppl_orthogonal(s, cfg);

  const double c = dot(P, fixed) / dot(fixed, fixed);
  double perp = 0;
  for (std::size_t i = 0; i < dim; ++i) perp += (P[i] - c * fixed[i]) * (P[i] - c * fixed[i]);
  const double expected = perp / static_cast<double>(dim - 1);
  CAPTURE(r.value);
  CAPTURE(expected);
  CHECK(std::abs(r.value - expected) < 4 * r.std_error);
}

TEST_CASE("path length estimates agree across seeds on a real model") {
  RandomModel m(small_net());
  const auto syn = m.model->synthesizer();
  for (auto space : {PplSpace::w, PplSpace::w1, PplSpace::w1_orthogonal}) {
    PplConfig a, b;
    a.space = b.space = space;
    a.num_paths = b.num_paths = 64;
    a.seed = 100;
    b.seed = 200;
    const auto ra = ppl(syn, a), rb = ppl(syn, b);
    CAPTURE(to_string(space));
    CAPTURE(ra.value);
    CAPTURE(rb.value);
    CHECK(ra.value > 0);
    CHECK(std::abs(ra.value - rb.value) < 3 * std::hypot(ra.std_error, rb.std_error));
    CHECK(ppl(syn, a).value == ra.value);  // deterministic in the seed
  }
}

TEST_CASE("single-latent models only support w and orthogonal paths") {
  RandomModel m(small_net(Arch::msg_baseline));
  PplConfig cfg;
  cfg.num_paths = 2;
  cfg.space = PplSpace::w1;
  CHECK_THROWS_AS(ppl(m.model->synthesizer(), cfg), ConfigError);
  cfg.space = PplSpace::w;
  CHECK(ppl(m.model->synthesizer(), cfg).value > 0);
  cfg.space = PplSpace::w1_orthogonal;
  CHECK(ppl(m.model->synthesizer(), cfg).value > 0);
}

TEST_CASE("standard error conventions and config checks") {
  CHECK(standard_error({3.0}) == 0.0);
  CHECK(std::abs(standard_error({1.0, 3.0}) - 1.0) < 1e-15);
  PplConfig cfg;
  cfg.num_paths = 1;
  auto r = ppl(constant_stub(true), cfg);
  CHECK(r.samples.size() == 1);
  CHECK(r.std_error == 0.0);
  cfg.epsilon = 0;
  CHECK_THROWS_AS(ppl(constant_stub(true), cfg), ConfigError);
  cfg.epsilon = 1e-4;
  cfg.num_paths = 0;
  CHECK_THROWS_AS(ppl(constant_stub(true), cfg), ConfigError);
  CHECK(parse_ppl_space("w1_orthogonal") == PplSpace::w1_orthogonal);
  CHECK_THROWS_AS(parse_ppl_space("z"), ConfigError);
}

TEST_CASE("orthonormal directions") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto w1 = random_latent(rng, 64);
    const auto d = sample_orthonormal_direction(w1, static_cast<std::uint64_t>(trial));
    REQUIRE(std::abs(dot(d, w1)) < 1e-9);
    REQUIRE(std::abs(std::sqrt(dot(d, d)) - 1.0) < 1e-12);
    REQUIRE(sample_orthonormal_direction(w1, static_cast<std::uint64_t>(trial)) == d);
    const auto e = sample_orthonormal_direction(w1, static_cast<std::uint64_t>(trial) + 1000);
    REQUIRE(std::abs(dot(d, e)) < 0.5);
  }
  CHECK_THROWS_AS(sample_orthonormal_direction(Latent(8, 0.0), 0), ContractError);
  // A one-hot w1 leaves the other axes untouched apart from normalisation.
  Latent axis(8, 0.0);
  axis[2] = 3.0;
  CHECK(sample_orthonormal_direction(axis, 4)[2] == 0.0);
}

TEST_CASE("edit_latent moves w1 by exactly alpha along the direction") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w1 = random_latent(rng, 32);
    const auto d = sample_orthonormal_direction(w1, rng());
    const double alpha = std::uniform_real_distribution<double>(-8, 8)(rng);
    const auto moved = edit_latent({w1, d, alpha, {}});
    double sq = 0;
    for (std::size_t i = 0; i < w1.size(); ++i) sq += (moved[i] - w1[i]) * (moved[i] - w1[i]);
    REQUIRE(std::abs(std::sqrt(sq) - std::abs(alpha)) < 1e-12 * (1 + std::abs(alpha)));
    REQUIRE(edit_latent({w1, d, 0.0, {}}) == w1);
  }
}

TEST_CASE("edit requests are validated") {
  Latent w1 = {1, 0, 0}, good = {0, 1, 0};
  CHECK_NOTHROW(edit_latent({w1, good, 2.0, {}}));
  CHECK_THROWS_AS(edit_latent({w1, {0, 2, 0}, 1.0, {}}), ContractError);
  CHECK_THROWS_AS(edit_latent({w1, {0.6, 0.8, 0}, 1.0, {}}), ContractError);
  CHECK_THROWS_AS(edit_latent({w1, {0, 1}, 1.0, {}}), ContractError);
  CHECK_THROWS_AS(edit_latent({w1, good, std::nan(""), {}}), ContractError);
}

TEST_CASE("editing w1 changes texture and coarse styles only") {
  RandomModel m(small_net());
  const auto& model = *m.model;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto w1 = model.w1(seed), w2 = model.w2(seed, seed + 50);
    const auto moved = edit_latent({w1, sample_orthonormal_direction(w1, seed), 2.0, w2});
    const auto before = model.pyramid(w1, w2), after = model.pyramid(moved, w2);
    for (const auto& [res, t] : before.texture) CHECK_FALSE(same_bits(t, after.texture.at(res)));

    const auto s0 = model.generator().styles(latent_tensor(w1), latent_tensor(w2));
    const auto s1 = model.generator().styles(latent_tensor(moved), latent_tensor(w2));
    for (std::size_t i = 0; i < s0.size(); ++i) {
      CAPTURE(s0[i].name);
      if (s0[i].coarse)
        CHECK_FALSE(same_bits(s0[i].style, s1[i].style));
      else
        CHECK(same_bits(s0[i].style, s1[i].style));
    }
    CHECK(same_bits(model.image(edit_latent({w1, sample_orthonormal_direction(w1, 1), 0.0, w2}), w2), model.image(w1, w2)));
  }
}

TEST_CASE("inference model derives latents from seeds") {
  RandomModel m(small_net());
  const auto& model = *m.model;
  CHECK(model.w1(7) == model.w1(7));
  CHECK(model.w1(7) != model.w1(8));
  CHECK(model.w2(7, 9) == model.latent(9, 2));
  CHECK(model.w2(7, 9) != model.latent(9, 1));
  const auto img = model.image(model.w1(1), model.w2(1, 2));
  CHECK(img.shape() == Shape{1, 3, 16, 16});
  for (double v : img.data()) REQUIRE((v >= -1 && v <= 1));

  RandomModel base(small_net(Arch::msg_baseline));
  CHECK(base.model->w2(7, 9) == base.model->w1(7));
}

TEST_CASE("inference weights are the float weights widened") {
  RandomModel m(small_net());
  std::mt19937_64 scratch(0);
  ParameterSet<double> fresh;
  Generator<double> g(small_net(), fresh, scratch);
  fresh.copy_from(m.params, false);
  NoGradGuard ng;
  const auto w1 = m.model->w1(3), w2 = m.model->w2(3, 4);
  CHECK(same_bits(g.image(latent_tensor(w1), latent_tensor(w2)), m.model->image(w1, w2)));
}
