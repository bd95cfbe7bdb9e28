// Acceptance runner: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is 0 when every gating criterion passes; the trend check (10) is
// reported but never gates, and only runs with --trend.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "stwo/app.hpp"
#include "stwo/errors.hpp"
#include "stwo/ops.hpp"
#include "support/dense_rtv.hpp"
#include "support/finite_diff.hpp"
#include "support/op_cases.hpp"

using namespace stwo;
using stwo::testing::gradient_rel_error;
using stwo::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds; 0 = none
  std::function<Outcome()> run;
  bool gating = true;
};

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

bool same_bits(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), static_cast<std::size_t>(a.numel()) * sizeof(double)) == 0;
}

double abs_sum(const Tensor<double>& t) {
  double s = 0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

// ---- 1, 2 ------------------------------------------------------------------

Outcome demod_equivalence() {
  const auto r = check_demod_equivalence(100, 1);
  return {r.max_abs_error < 1e-9, "100 layers, max |A W B - demodulate| = " + sci(r.max_abs_error) + " (tol 1e-9)"};
}

Outcome rank_one_locality() {
  double worst_norm = 0, worst_sigma2 = 0, min_changed = 1;
  std::int64_t max_rank = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double delta = 0.25 + 0.1 * static_cast<double>(seed);
    const auto r = check_rank_one(seed, delta);
    worst_norm = std::max(worst_norm, std::abs(r.decomp.frobenius - delta));
    if (r.decomp.singular_values.size() > 1) worst_sigma2 = std::max(worst_sigma2, r.decomp.singular_values[1]);
    max_rank = std::max(max_rank, r.decomp.numerical_rank);
    min_changed = std::min(min_changed, r.demod.changed_fraction);
  }
  const bool ok = worst_norm < 1e-9 && worst_sigma2 < 1e-9 && min_changed > 0.99;
  return {ok, "10 layers: max | ||dW||_F - |delta| | = " + sci(worst_norm) + " (tol 1e-9), max sigma_2 = " +
                  sci(worst_sigma2) + " (tol 1e-9), rank " + std::to_string(max_rank) +
                  "; demod changed min " + fixed(100 * min_changed, 1) + "% (> 99%)"};
}

// ---- 3 -----------------------------------------------------------------------

Outcome ortho_regularization() {
  std::mt19937_64 rng(3);
  ParameterSet<double> params;
  double zero = 0;
  for (KernelDims dims : {KernelDims{8, 6, 3, 3}, KernelDims{16, 16, 3, 3}, KernelDims{5, 4, 1, 1}}) {
    const auto l = make_decomp_layer(params, "c3." + std::to_string(dims.out), dims, true, FactorInit::orthonormal, rng);
    zero = std::max(zero, ortho_penalty(l, 1.0).item());
  }
  DecompLayer<double> worked;
  worked.dims = {2, 2, 1, 1};
  worked.ortho_regularized = true;
  worked.u = Tensor<double>({2, 2}, {1, 1, 0, 0});
  worked.v = Tensor<double>({2, 2}, {1, 0, 0, 1});
  const double value = ortho_penalty(worked, 1.0).item();
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    std::vector<Tensor<double>> in{random_tensor(r, {4, 3}), random_tensor(r, {6, 3})};
    worst = std::max(worst, gradient_rel_error(
                                [](const std::vector<Tensor<double>>& p) {
                                  DecompLayer<double> x;
                                  x.dims = {4, 3, 1, 2};
                                  x.ortho_regularized = true;
                                  x.u = p[0];
                                  x.v = p[1];
                                  return ortho_penalty(x, 0.7);
                                },
                                in));
  }
  const bool ok = zero < 1e-20 && std::abs(value - 2.0) < 1e-15 && worst < 1e-6;
  return {ok, "orthonormal " + sci(zero) + " (tol 1e-20), worked example " + fixed(value, 15) +
                  " (2.0), gradient rel err " + sci(worst) + " over 20 seeds (tol 1e-6)"};
}

// ---- 4 -----------------------------------------------------------------------

std::vector<stwo::testing::OpCase> styled_cases() {
  using V = std::vector<Tensor<double>>;
  using stwo::testing::ext;
  using stwo::testing::projected;
  std::vector<stwo::testing::OpCase> cases;
  cases.push_back({"demodulate", [](auto& rng) {
                     KernelDims d{ext(rng, 1, 4), ext(rng, 1, 4), 3, 3};
                     return projected(rng, V{random_tensor(rng, d.shape()), random_tensor(rng, {2, d.in})}, [d](const V& in) {
                       return demodulate(DemodLayer<double>{d, in[0], 1e-8}, in[1]);
                     });
                   }});
  cases.push_back({"decompose_weight", [](auto& rng) {
                     KernelDims d{ext(rng, 1, 4), ext(rng, 1, 4), 3, 3};
                     return projected(rng,
                                      V{random_tensor(rng, {d.out, d.in}), random_tensor(rng, {d.flat_in(), d.in}),
                                        random_tensor(rng, {2, d.in})},
                                      [d](const V& in) {
                                        return decompose_weight(DecompLayer<double>{d, in[0], in[1], false}, in[2]);
                                      });
                   }});
  cases.push_back({"modulated conv", [](auto& rng) {
                     KernelDims d{ext(rng, 1, 3), ext(rng, 1, 3), 3, 3};
                     auto x = random_tensor(rng, {2, d.in, 4, 4});
                     return projected(rng,
                                      V{x, random_tensor(rng, {d.out, d.in}), random_tensor(rng, {d.flat_in(), d.in}),
                                        random_tensor(rng, {5, d.in}), random_tensor(rng, {d.in}), random_tensor(rng, {2, 5})},
                                      [d](const V& in) {
                                        return modulated_conv_forward(in[0], StyledLayer<double>(DecompLayer<double>{d, in[1], in[2], false}),
                                                                      AffineStyle<double>{in[3], in[4]}, in[5]);
                                      });
                   }});
  // Second order: a gradient-norm penalty differentiated again.
  cases.push_back({"gradient penalty (double backward)", [](auto& rng) {
                     auto x = random_tensor(rng, {2, 2, 4, 4});
                     auto w = random_tensor(rng, {3, 2, 3, 3}, 0.5);
                     auto v = random_tensor(rng, {3 * 4, 1}, 0.5);
                     return projected(rng, V{x, w, v}, [](const V& in) {
                       EnableGradGuard on(true);
                       auto leaf = in[0].detach();
                       leaf.set_requires_grad(true);
                       auto h = ops::downsample2x(ops::leaky_relu(ops::conv2d(leaf, in[1], 1)));
                       auto score = ops::matmul(ops::reshape(h, {2, 12}), in[2]);
                       auto g = grad(ops::sum(score), {leaf}, true)[0];
                       return ops::reshape(ops::sum(ops::mul(g, g)), {1});
                     });
                   }});
  return cases;
}

Outcome autodiff_soundness() {
  auto cases = stwo::testing::op_cases();
  for (auto& c : styled_cases()) cases.push_back(std::move(c));
  double worst = 0;
  std::string worst_name;
  int checks = 0;
  for (const auto& c : cases)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed * 7919 + 1);
      auto [inputs, f] = c.make(rng);
      const double err = gradient_rel_error(f, inputs);
      ++checks;
      if (!(err <= worst)) worst = err, worst_name = c.name;
    }
  return {worst < 1e-6, std::to_string(cases.size()) + " ops x 20 seeds (" + std::to_string(checks) +
                            " checks), worst rel err " + sci(worst) + " [" + worst_name + "] (tol 1e-6)"};
}

// ---- 5, 6 --------------------------------------------------------------------

struct DoubleModel {
  ParameterSet<double> gp, dp;
  std::unique_ptr<Generator<double>> g;
  std::unique_ptr<Discriminator<double>> d;

  explicit DoubleModel(const NetConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    g = std::make_unique<Generator<double>>(cfg, gp, rng);
    d = std::make_unique<Discriminator<double>>(cfg, dp, rng);
  }
};

NetConfig default_net() {
  TrainConfig t;
  t.finalize();
  return t.net;
}

Outcome texture_independence() {
  const auto cfg = default_net();
  DoubleModel m(cfg, 5);
  NoGradGuard ng;
  std::mt19937_64 rng(55);
  int w2_same = 0, w1_diff = 0;
  for (int pair = 0; pair < 20; ++pair) {
    auto w1 = random_tensor(rng, {1, cfg.w_dim}), w1b = random_tensor(rng, {1, cfg.w_dim});
    auto w2 = random_tensor(rng, {1, cfg.w_dim}), w2b = random_tensor(rng, {1, cfg.w_dim});
    const auto base = m.g->forward(w1, w2), other_w2 = m.g->forward(w1, w2b), other_w1 = m.g->forward(w1b, w2);
    bool same = true, differs = true;
    for (const auto& [res, t] : base.texture) {
      same &= same_bits(t, other_w2.texture.at(res));
      differs &= !same_bits(t, other_w1.texture.at(res));
    }
    w2_same += same;
    w1_diff += differs;
  }
  return {w2_same == 20 && w1_diff == 20, "20 pairs: texture bit-identical under w2 change " + std::to_string(w2_same) +
                                              "/20, changed under w1 change " + std::to_string(w1_diff) + "/20"};
}

Outcome split_discriminator() {
  const auto cfg = default_net();
  DoubleModel m(cfg, 6);
  std::mt19937_64 rng(66);
  auto w1 = random_tensor(rng, {2, cfg.w_dim}), w2 = random_tensor(rng, {2, cfg.w_dim});
  auto pyr = m.g->forward(w1, w2);
  auto s = m.d->forward(pyr);
  bool exact = true;
  auto sum = ops::add(s.d1, s.d2);
  for (std::int64_t i = 0; i < sum.numel(); ++i) exact &= sum[i] == s.score[i];

  auto zeroed = pyr;
  for (auto& [res, t] : zeroed.texture) t = Tensor<double>(t.shape(), 0.0);
  bool d1_same, d2_moved;
  {
    NoGradGuard ng;
    d1_same = same_bits(m.d->d1(zeroed), m.d->d1(pyr));
    d2_moved = !same_bits(m.d->d2(zeroed), m.d->d2(pyr));
  }

  // D2 reaches the coarse texture head, D1 the fine blocks; neither leaks into the other.
  const auto tex = m.gp.at("g.b3.trgb.bias").tensor;
  const auto fine = m.gp.at("g.b" + std::to_string(cfg.n) + ".conv1.bias").tensor;
  const auto g2 = grad(ops::sum(s.d2), {tex, fine});
  const auto g1 = grad(ops::sum(s.d1), {tex, fine});
  const bool flows = abs_sum(g2[0]) > 0 && abs_sum(g2[1]) == 0 && abs_sum(g1[0]) == 0 && abs_sum(g1[1]) > 0;
  return {exact && d1_same && d2_moved && flows,
          std::string("score == d1 + d2 ") + (exact ? "exact" : "NOT exact") + "; zeroed texture: d1 " +
              (d1_same ? "unchanged" : "CHANGED") + ", d2 " + (d2_moved ? "changed" : "unchanged") +
              "; |dD2/d tex head| " + sci(abs_sum(g2[0])) + ", |dD1/d fine| " + sci(abs_sum(g1[1])) +
              ", cross terms " + sci(abs_sum(g2[1]) + abs_sum(g1[0]))};
}

// ---- 7 -----------------------------------------------------------------------

Outcome decomposition() {
  Planar flat(3, 32, 32, 0.37);
  const auto d = rtv_decompose(flat);
  double tex_max = 0;
  for (double v : d.texture.data) tex_max = std::max(tex_max, std::abs(v));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Planar img(3, 32, 32);
  for (auto& v : img.data) v = u(rng);
  const auto r = rtv_decompose(img);
  double recon = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    recon = std::max(recon, std::abs(r.structure.data[i] + r.texture.data[i] - img.data[i]));
  const double rel = stwo::testing::relative_l2(r.structure, stwo::testing::dense_rtv(img, DecompositionParams{}));
  return {tex_max < 1e-6 && recon < 1e-12 && rel < 1e-3,
          "constant image texture max " + sci(tex_max) + " (tol 1e-6); reconstruction " + sci(recon) +
              " (tol 1e-12); 32x32 vs dense oracle rel err " + sci(rel) + " (tol 1e-3)"};
}

// ---- 8 -----------------------------------------------------------------------

Outcome metrics() {
  Synthesizer constant;
  constant.split = true;
  constant.sample = [](std::mt19937_64& rng, int) {
    Latent w(8);
    std::normal_distribution<double> nd;
    for (auto& v : w) v = nd(rng);
    return w;
  };
  constant.render = [](const Latent&, const Latent&) { return Tensor<double>({1, 3, 8, 8}, 0.3); };
  PplConfig cfg;
  cfg.num_paths = 16;
  double const_max = 0;
  for (auto space : {PplSpace::w, PplSpace::w1, PplSpace::w2, PplSpace::w1_orthogonal}) {
    cfg.space = space;
    const_max = std::max(const_max, std::abs(ppl(constant, cfg).value));
  }

  Synthesizer linear;
  linear.split = false;
  auto calls = std::make_shared<int>(0);
  linear.sample = [calls](std::mt19937_64&, int) {
    Latent w(8, 0.0);
    if ((*calls)++ % 2) w[0] = 1.0;
    return w;
  };
  linear.render = [](const Latent& w, const Latent&) { return Tensor<double>({1, 1, 1, 1}, w[0]); };
  cfg.space = PplSpace::w;
  cfg.distance_levels = 1;
  cfg.num_paths = 64;
  const auto lin = ppl(linear, cfg);
  double lin_err = 0;
  for (double v : lin.samples) lin_err = std::max(lin_err, std::abs(v - 1.0));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  double edit_err = 0, lerp_err = 0;
  bool lerp0 = true;
  for (int trial = 0; trial < 100; ++trial) {
    Latent a(64), b(64);
    for (auto& v : a) v = nd(rng);
    for (auto& v : b) v = nd(rng);
    const double alpha = 8 * nd(rng);
    const auto moved = edit_latent({a, sample_orthonormal_direction(a, rng()), alpha, b});
    double sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (moved[i] - a[i]) * (moved[i] - a[i]);
    edit_err = std::max(edit_err, std::abs(std::sqrt(sq) - std::abs(alpha)) / std::max(1.0, std::abs(alpha)));
    lerp0 &= lerp(a, b, 0.0) == a;
    const auto end = lerp(a, b, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) lerp_err = std::max(lerp_err, std::abs(end[i] - b[i]));
  }
  const bool ok = const_max == 0.0 && std::abs(lin.value - 1.0) < 1e-9 && lin_err < 1e-9 && edit_err < 1e-12 && lerp0 &&
                  lerp_err < 1e-15;
  return {ok, "constant generator " + sci(const_max) + " (exactly 0); linear stub " + fixed(lin.value, 12) +
                  " (1 +- 1e-9); | ||dw1|| - |alpha| | rel " + sci(edit_err) + " (tol 1e-12); lerp t=0 " +
                  (lerp0 ? "exact" : "INEXACT") + ", t=1 max err " + sci(lerp_err) + " (tol 1e-15)"};
}

// ---- 9, 11 -------------------------------------------------------------------

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.config_id = ConfigId::stgan_wo;
  cfg.net.n = 6;
  cfg.batch = 8;
  cfg.steps = 200;
  cfg.seed = 2024;
  cfg.finalize();
  return cfg;
}

Outcome training_smoke() {
  const auto cfg = smoke_config();
  const auto data = prepare_real_data(load_dataset(cfg), cfg.net, cfg.decomposition);
  TrainState a(cfg), b(cfg);
  bool finite = true, same_losses = true;
  for (std::int64_t i = 0; i < cfg.steps; ++i) {
    const auto sa = train_step(a, data);
    finite &= std::isfinite(sa.loss_g) && std::isfinite(sa.loss_d) && std::isfinite(sa.r1) && std::isfinite(sa.ortho);
  }
  for (std::int64_t i = 0; i < cfg.steps; ++i) train_step(b, data);
  // Re-run a short prefix step by step to compare the logged losses too.
  TrainState c(cfg), d(cfg);
  for (int i = 0; i < 5; ++i) {
    const auto sc = train_step(c, data), sd = train_step(d, data);
    same_losses &= sc.loss_g == sd.loss_g && sc.loss_d == sd.loss_d && sc.r1 == sd.r1 && sc.ortho == sd.ortho;
  }
  const bool identical = states_equal(a, b);
  return {finite && identical && same_losses,
          "stgan_wo n=6 batch 8, 200 steps x 2 runs: losses " + std::string(finite ? "finite" : "NON-FINITE") +
              ", final weights/optimizer/EMA/RNG " + (identical ? "bit-identical" : "DIFFER")};
}

Outcome checkpoint_round_trip() {
  auto cfg = smoke_config();
  const auto data = prepare_real_data(load_dataset(cfg), cfg.net, cfg.decomposition);
  TrainState direct(cfg);
  train_step(direct, data);
  const auto dir = std::filesystem::temp_directory_path() / ("stwo_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  save_checkpoint(direct, dir / "c.stwo");
  auto resumed = load_checkpoint(dir / "c.stwo");
  const bool loaded_equal = states_equal(direct, *resumed);
  train_step(direct, data);
  train_step(*resumed, data);
  const bool equal = states_equal(direct, *resumed);
  std::filesystem::remove_all(dir);
  return {loaded_equal && equal, std::string("load ") + (loaded_equal ? "exact" : "MISMATCH") +
                                     "; one step after resume vs uninterrupted: " + (equal ? "bit-identical" : "DIFFER")};
}

// ---- 10 ----------------------------------------------------------------------

struct TrendOptions {
  bool enabled = false;
  std::int64_t steps = 2000;
  int seeds = 3;
  std::int64_t paths = 256;
  std::string dir;
};

double trained_l_perp(ConfigId id, std::uint64_t seed, const TrendOptions& opt) {
  TrainConfig cfg;
  cfg.config_id = id;
  cfg.seed = seed;
  cfg.steps = opt.steps;
  if (!opt.dir.empty()) {
    cfg.out_dir = (std::filesystem::path(opt.dir) / (std::string(to_string(id)) + "_seed" + std::to_string(seed))).string();
    cfg.checkpoint_every = 100;
  }
  cfg.finalize();
  std::unique_ptr<TrainState> state;
  const auto ckpt = std::filesystem::path(cfg.out_dir) / "checkpoint.stwo";
  if (!cfg.out_dir.empty() && std::filesystem::exists(ckpt)) {
    state = load_checkpoint(ckpt);
    state->cfg.steps = cfg.steps;
  } else {
    state = std::make_unique<TrainState>(cfg);
  }
  if (state->step < static_cast<std::uint64_t>(cfg.steps)) {
    const auto data = prepare_real_data(load_dataset(state->cfg), state->cfg.net, state->cfg.decomposition);
    train(*state, data);
  }
  const auto model = model_from_state(*state);
  PplConfig p;
  p.space = PplSpace::w1_orthogonal;
  p.num_paths = opt.paths;
  p.seed = 77;
  const auto r = ppl(model.model->synthesizer(), p);
  std::cerr << "  trend: " << to_string(id) << " seed " << seed << " l_perp " << r.value << " +- " << r.std_error << "\n";
  return r.value;
}

Outcome directional_trend(const TrendOptions& opt) {
  double c = 0, s = 0;
  std::ostringstream raw;
  for (int k = 0; k < opt.seeds; ++k) {
    const auto seed = static_cast<std::uint64_t>(k + 1);
    const double vc = trained_l_perp(ConfigId::C, seed, opt), vs = trained_l_perp(ConfigId::stgan_wo, seed, opt);
    c += vc / opt.seeds;
    s += vs / opt.seeds;
    raw << (k ? "; " : "") << "seed " << seed << ": C " << sci(vc) << ", stgan_wo " << sci(vs);
  }
  return {s <= c, std::to_string(opt.steps) + " steps x " + std::to_string(opt.seeds) + " seeds, mean l_perp stgan_wo " +
                      sci(s) + " vs C " + sci(c) + " [" + raw.str() + "]"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  TrendOptions trend;
  std::string json_out;
  app.add_option("--only", only, "Run just these criteria");
  app.add_flag("--trend", trend.enabled, "Also run the (slow, non-gating) directional trend check");
  app.add_option("--trend-steps", trend.steps, "Training steps per run for the trend check");
  app.add_option("--trend-seeds", trend.seeds, "Seeds for the trend check");
  app.add_option("--trend-paths", trend.paths, "Paths for each l_perp estimate");
  app.add_option("--trend-dir", trend.dir, "Keep (and reuse) trend-check checkpoints here");
  app.add_option("--json", json_out, "Write results as JSON");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "demodulation equivalence", 5, demod_equivalence},
      {2, "rank-1 locality", 5, rank_one_locality},
      {3, "orthogonal regularization", 0, ortho_regularization},
      {4, "autodiff soundness", 60, autodiff_soundness},
      {5, "texture independence", 30, texture_independence},
      {6, "split discriminator", 10, split_discriminator},
      {7, "decomposition", 60, decomposition},
      {8, "metrics", 0, metrics},
      {9, "training smoke + determinism", 600, training_smoke},
      {10, "directional trend (soft)", 0, [&] { return directional_trend(trend); }, false},
      {11, "checkpoint round-trip", 0, checkpoint_round_trip},
  };

  bool all_ok = true;
  nlohmann::json results = nlohmann::json::array();
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    if (c.id == 10 && !trend.enabled) {
      std::cout << "[SKIP] " << std::setw(2) << c.id << " " << c.title
                << ": non-gating; run with --trend (about 12k training steps)\n";
      results.push_back({{"id", c.id}, {"title", c.title}, {"status", "skipped"}});
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool in_time = c.time_limit <= 0 || secs < c.time_limit;
    const bool pass = o.pass && in_time;
    std::string timing = fixed(secs, 2) + " s";
    if (c.time_limit > 0) timing += " (limit " + fixed(c.time_limit, 0) + " s)";
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << c.id << " " << c.title << ": " << o.detail << "; "
              << timing << (c.gating ? "" : " [non-gating]") << "\n"
              << std::flush;
    results.push_back({{"id", c.id}, {"title", c.title}, {"status", pass ? "pass" : "fail"}, {"detail", o.detail},
                       {"seconds", secs}, {"gating", c.gating}});
    if (c.gating && !pass) all_ok = false;
  }
  if (!json_out.empty()) std::ofstream(json_out) << results.dump(2) << "\n";
  return all_ok ? 0 : 1;
}
