#include "stwo/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stwo/errors.hpp"
#include "stwo/ops.hpp"

namespace stwo {

template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  AdversarialLosses<T> out;
  out.loss_g = ops::mean(ops::softplus(ops::scale(d_fake, T(-1))));
  out.loss_d = ops::add(ops::mean(ops::softplus(d_fake)), ops::mean(ops::softplus(ops::scale(d_real, T(-1)))));
  return out;
}

namespace {

template <typename T>
Tensor<T> generator_loss(const Tensor<T>& d_fake) {
  return ops::mean(ops::softplus(ops::scale(d_fake, T(-1))));
}

// Detached copies of every level, marked as gradient leaves.
template <typename T>
ImagePyramid<T> leaf_copy(const ImagePyramid<T>& p) {
  ImagePyramid<T> out;
  out.n = p.n;
  out.r = p.r;
  for (const auto& [res, t] : p.rgb) out.rgb[res] = t.detach();
  for (const auto& [res, t] : p.texture) out.texture[res] = t.detach();
  for (auto& t : pyramid_inputs(out)) t.set_requires_grad(true);
  return out;
}

template <typename T>
Tensor<T> r1_from_scores(const Tensor<T>& score, const std::vector<Tensor<T>>& inputs, T gamma) {
  EnableGradGuard on(true);
  const auto grads = grad(ops::sum(score), inputs, /*create_graph=*/true);
  Tensor<T> total;
  for (const auto& g : grads) {
    auto sq = ops::sum(ops::mul(g, g));
    total = total.defined() ? ops::add(total, sq) : sq;
  }
  const T batch = static_cast<T>(score.dim(0));
  return ops::scale(total, gamma / T(2) / batch);
}

}  // namespace

template <typename T>
Tensor<T> r1_penalty(const ScoreFn<T>& score, const ImagePyramid<T>& real, T gamma) {
  auto leaves = leaf_copy(real);
  Tensor<T> s;
  {
    EnableGradGuard on(true);
    s = score(leaves);
  }
  return r1_from_scores(s, pyramid_inputs(leaves), gamma);
}

template <typename T>
Tensor<T> r1_penalty(const Discriminator<T>& d, const ImagePyramid<T>& real, T gamma) {
  return r1_penalty<T>([&](const ImagePyramid<T>& p) { return d.forward(p).score; }, real, gamma);
}

template <typename T>
Tensor<T> generator_objective(const Tensor<T>& loss_g, const Generator<T>& g, T ortho_alpha) {
  if (g.ortho_layers().empty()) return loss_g;
  return ops::add(loss_g, g.ortho_term(ortho_alpha));
}

template <typename T>
Tensor<T> normal_latents(std::mt19937_64& rng, std::int64_t b, std::int64_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<T> z({b, dim});
  for (auto& v : z.mutable_data()) v = static_cast<T>(nd(rng));
  return z;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> map_pair(const Generator<T>& g, const Tensor<T>& z1, const Tensor<T>& z2) {
  auto w1 = g.map_latent(z1, 1);
  if (g.config().arch != Arch::stia) return {w1, w1};
  return {w1, g.map_latent(z2, 2)};
}

// ---- state -------------------------------------------------------------------

TrainState::TrainState(TrainConfig config) : cfg(std::move(config)) {
  cfg.finalize();
  rng.seed(cfg.seed);
  g = std::make_unique<Generator<float>>(cfg.net, g_params, rng);
  d = std::make_unique<Discriminator<float>>(cfg.net, d_params, rng);
  std::mt19937_64 scratch(0);
  ema = std::make_unique<Generator<float>>(cfg.net, ema_params, scratch);
  ema_params.copy_from(g_params, false);
  ema_params.set_requires_grad(false);
}

namespace {

std::string parameter_report(const TrainState& s) {
  std::ostringstream out;
  for (const auto* set : {&s.g_params, &s.d_params})
    for (const auto& p : set->items()) {
      double max_abs = 0;
      bool finite = true;
      for (float v : p.tensor.data()) {
        finite &= std::isfinite(v);
        if (std::isfinite(v)) max_abs = std::max(max_abs, double(std::abs(v)));
      }
      out << "\n  " << p.name << " " << shape_str(p.tensor.shape()) << " max|v|=" << max_abs
          << (finite ? "" : " NON-FINITE");
    }
  return out.str();
}

void ema_update(TrainState& s) {
  const float beta = static_cast<float>(s.cfg.ema_beta);
  auto& src = s.g_params.items();
  auto& dst = s.ema_params.items();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto from = src[i].tensor.data();
    auto to = dst[i].tensor.mutable_data();
    for (std::size_t k = 0; k < to.size(); ++k) to[k] = beta * to[k] + (1.0f - beta) * from[k];
  }
}

}  // namespace

StepStats train_step(TrainState& s, const RealData& data) {
  const auto start = std::chrono::steady_clock::now();
  const auto& cfg = s.cfg;
  const auto b = cfg.batch;
  StepStats stats;
  try {
    EnableGradGuard grad_on(true);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(b));
    for (auto& i : idx) i = std::uniform_int_distribution<std::int64_t>(0, data.count - 1)(s.rng);
    const auto real = leaf_copy(data.batch(idx));

    // Discriminator: adversarial loss on real and generated batches, plus R1 on the real one.
    ImagePyramid<float> fake;
    {
      NoGradGuard ng;
      auto z1 = normal_latents<float>(s.rng, b, cfg.net.z_dim);
      auto z2 = normal_latents<float>(s.rng, b, cfg.net.z_dim);
      auto [w1, w2] = map_pair(*s.g, z1, z2);
      fake = s.g->forward(w1, w2);
    }
    s.g_params.set_requires_grad(false);
    auto d_real = s.d->forward(real).score;
    auto d_fake = s.d->forward(fake).score;
    auto losses = adversarial_losses(d_real, d_fake);
    auto r1 = r1_from_scores(d_real, pyramid_inputs(real), static_cast<float>(cfg.r1_gamma));
    backward(ops::add(losses.loss_d, r1));
    adam_step(s.d_params, AdamOptions{cfg.lr_d});
    stats.loss_d = losses.loss_d.item();
    stats.r1 = r1.item();

    // Generator: non-saturating loss plus the orthogonality term.
    s.g_params.set_requires_grad(true);
    s.d_params.set_requires_grad(false);
    auto z1 = normal_latents<float>(s.rng, b, cfg.net.z_dim);
    auto z2 = normal_latents<float>(s.rng, b, cfg.net.z_dim);
    auto [w1, w2] = map_pair(*s.g, z1, z2);
    auto loss_g = generator_loss(s.d->forward(s.g->forward(w1, w2)).score);
    auto objective = generator_objective(loss_g, *s.g, static_cast<float>(cfg.ortho_alpha));
    backward(objective);
    adam_step(s.g_params, AdamOptions{cfg.lr_g});
    s.d_params.set_requires_grad(true);
    stats.loss_g = loss_g.item();
    stats.ortho = objective.item() - loss_g.item();

    if (!std::isfinite(stats.loss_g) || !std::isfinite(stats.loss_d) || !std::isfinite(stats.r1) ||
        !std::isfinite(stats.ortho))
      throw NumericError("non-finite loss");
    if (cfg.ema_enabled) ema_update(s);
  } catch (const NumericError& e) {
    s.g_params.set_requires_grad(true);
    s.d_params.set_requires_grad(true);
    throw NumericError("training step " + std::to_string(s.step + 1) + " failed: " + e.what() +
                       "\nparameter stats:" + parameter_report(s));
  }
  ++s.step;
  stats.step = s.step;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

void train(TrainState& state, const RealData& data, const std::function<void(const StepStats&)>& on_step) {
  const auto& cfg = state.cfg;
  std::ofstream log;
  std::filesystem::path dir;
  if (!cfg.out_dir.empty()) {
    dir = cfg.out_dir;
    std::filesystem::create_directories(dir);
    const auto log_path = dir / "train_log.csv";
    const bool fresh = !std::filesystem::exists(log_path) || state.step == 0;
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw FormatError("cannot write " + log_path.string());
    if (fresh) log << "step,loss_g,loss_d,r1,ortho,seconds\n";
  }
  while (state.step < static_cast<std::uint64_t>(cfg.steps)) {
    const auto stats = train_step(state, data);
    if (log.is_open()) {
      log << stats.step << ',' << std::setprecision(9) << stats.loss_g << ',' << stats.loss_d << ',' << stats.r1 << ','
          << stats.ortho << ',' << std::setprecision(6) << stats.seconds << '\n';
      log.flush();
    }
    if (on_step) on_step(stats);
    if (!dir.empty() && cfg.checkpoint_every > 0 && state.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0)
      save_checkpoint(state, dir / "checkpoint.stwo");
  }
  if (!dir.empty()) save_checkpoint(state, dir / "checkpoint.stwo");
}

#define STWO_INSTANTIATE_TRAINING(T)                                                                    \
  template AdversarialLosses<T> adversarial_losses(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> r1_penalty(const ScoreFn<T>&, const ImagePyramid<T>&, T);                          \
  template Tensor<T> r1_penalty(const Discriminator<T>&, const ImagePyramid<T>&, T);                    \
  template Tensor<T> generator_objective(const Tensor<T>&, const Generator<T>&, T);                     \
  template Tensor<T> normal_latents<T>(std::mt19937_64&, std::int64_t, std::int64_t);                   \
  template std::pair<Tensor<T>, Tensor<T>> map_pair(const Generator<T>&, const Tensor<T>&, const Tensor<T>&);

STWO_INSTANTIATE_TRAINING(float)
STWO_INSTANTIATE_TRAINING(double)

}  // namespace stwo
