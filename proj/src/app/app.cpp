#include "stwo/app.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "stwo/errors.hpp"
#include "stwo/image_io.hpp"

namespace stwo {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

LoadedModel model_from_state(const TrainState& state) {
  LoadedModel out;
  out.config = state.cfg;
  out.model = std::make_unique<InferenceModel>(state.cfg.net, state.sampler_params());
  return out;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const auto state = load_checkpoint(checkpoint);
  return model_from_state(*state);
}

std::vector<std::uint8_t> png_bytes(const Tensor<double>& batch, std::int64_t index) {
  return encode_png(to_rgb8(batch, index));
}

std::vector<std::uint8_t> render_sample(const InferenceModel& m, std::uint64_t seed1, std::uint64_t seed2) {
  return png_bytes(m.image(m.w1(seed1), m.w2(seed1, seed2)));
}

EditedImage render_edit(const InferenceModel& m, std::uint64_t seed1, std::uint64_t seed2, std::uint64_t dir_seed,
                        double alpha) {
  EditedImage out;
  out.w1 = m.w1(seed1);
  out.w2 = m.w2(seed1, seed2);
  const auto dir = sample_orthonormal_direction(out.w1, dir_seed);
  out.w1_edited = edit_latent({out.w1, dir, alpha, out.w2});
  double sq = 0;
  for (std::size_t i = 0; i < out.w1.size(); ++i) sq += (out.w1_edited[i] - out.w1[i]) * (out.w1_edited[i] - out.w1[i]);
  out.delta_norm = std::sqrt(sq);
  // The baseline has one latent, so the edit moves every layer's input.
  const auto& w2 = m.config().arch == Arch::stia ? out.w2 : out.w1_edited;
  out.png = png_bytes(m.image(out.w1_edited, w2));
  return out;
}

Tensor<float> load_dataset(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) return synthetic_images(cfg.synthetic_images, cfg.net.n, cfg.seed);
  return load_image_dir(cfg.dataset, cfg.net.n);
}

DemodCheck check_demod_equivalence(int layers, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  DemodCheck out;
  out.layers = layers;
  for (int l = 0; l < layers; ++l) {
    const std::int64_t k = pick(0, 1) ? 3 : 1;
    DemodLayer<double> layer{KernelDims{pick(1, 16), pick(1, 16), k, k}, {}, 1e-8};
    layer.weight = Tensor<double>(layer.dims.shape());
    for (auto& v : layer.weight.mutable_data()) v = nd(rng);
    std::vector<double> style(static_cast<std::size_t>(layer.dims.in));
    for (auto& s : style) s = nd(rng);
    const auto direct = demodulate(layer, Tensor<double>({layer.dims.in}, style));
    const auto factored = apply_demod_factors(demod_diag_factors(layer, style), layer);
    for (std::size_t i = 0; i < factored.size(); ++i)
      out.max_abs_error = std::max(out.max_abs_error, std::abs(factored[i] - direct.data()[i]));
  }
  out.seconds = seconds_since(start);
  return out;
}

RankCheck check_rank_one(std::uint64_t seed, double delta) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  const KernelDims dims{8, 6, 3, 3};
  ParameterSet<double> params;
  const auto decomp = make_decomp_layer(params, "verify.decomp", dims, true, FactorInit::orthonormal, rng);
  const auto demod = make_demod_layer(params, "verify.demod", dims, rng);
  std::uniform_real_distribution<double> uni(0.5, 1.5);
  std::vector<double> style(static_cast<std::size_t>(dims.in));
  for (auto& s : style) s = uni(rng);
  const std::int64_t channel = 2;
  RankCheck out;
  out.decomp = perturb_report(StyledLayer<double>(decomp), style, channel, delta);
  out.demod = perturb_report(StyledLayer<double>(demod), style, channel, delta);
  out.seconds = seconds_since(start);
  return out;
}

namespace {

double second_singular(const SensitivityReport& r) {
  return r.singular_values.size() > 1 ? r.singular_values[1] : 0.0;
}

nlohmann::json report_json(const SensitivityReport& r) {
  return {{"scheme", to_string(r.scheme)},
          {"channel", r.channel},
          {"delta", r.delta},
          {"rows", r.rows},
          {"cols", r.cols},
          {"frobenius", r.frobenius},
          {"singular_values", r.singular_values},
          {"numerical_rank", r.numerical_rank},
          {"changed_fraction", r.changed_fraction}};
}

}  // namespace

std::string verify_text(const DemodCheck& d, const RankCheck& r) {
  std::ostringstream out;
  out.precision(3);
  out << std::scientific;
  out << "demodulation equivalence: " << d.layers << " random layers, max error " << d.max_abs_error << "\n";
  for (const auto* rep : {&r.decomp, &r.demod}) {
    out << to_string(rep->scheme) << ": style[" << rep->channel << "] += " << rep->delta << " on a " << rep->rows
        << " x " << rep->cols << " weight -> ||dW||_F " << rep->frobenius << ", sigma_2 " << second_singular(*rep)
        << ", rank " << rep->numerical_rank << ", changed " << std::fixed << 100 * rep->changed_fraction << "%"
        << std::scientific << "\n";
  }
  return out.str();
}

std::string verify_json(const DemodCheck& d, const RankCheck& r) {
  nlohmann::json j = {{"demod_equivalence", {{"layers", d.layers}, {"max_abs_error", d.max_abs_error}}},
                      {"sensitivity", {report_json(r.decomp), report_json(r.demod)}}};
  return j.dump(2);
}

}  // namespace stwo
