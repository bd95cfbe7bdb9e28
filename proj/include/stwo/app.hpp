#pragma once

// Pieces shared by the command-line tool, the HTTP service and the acceptance
// runner: loading a generator from a checkpoint, seed-driven rendering, and the
// modulation checks behind `verify`.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stwo/metrics.hpp"
#include "stwo/stylemod.hpp"
#include "stwo/training.hpp"

namespace stwo {

// A checkpoint's sampling generator (EMA weights when enabled), frozen.
struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<InferenceModel> model;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);
LoadedModel model_from_state(const TrainState& state);

// 8-bit RGB PNG of image `index` of a b x 3 x H x W batch in [-1, 1].
std::vector<std::uint8_t> png_bytes(const Tensor<double>& batch, std::int64_t index = 0);

struct EditedImage {
  Latent w1, w1_edited, w2;
  double delta_norm = 0;
  std::vector<std::uint8_t> png;
};

// w1 from seed1, w2 from seed2, moved along the direction from dir_seed.
EditedImage render_edit(const InferenceModel& m, std::uint64_t seed1, std::uint64_t seed2, std::uint64_t dir_seed,
                        double alpha);
std::vector<std::uint8_t> render_sample(const InferenceModel& m, std::uint64_t seed1, std::uint64_t seed2);

// Training corpus for a config: the PNG directory, or the synthetic set.
Tensor<float> load_dataset(const TrainConfig& cfg);

// ---- modulation checks ---------------------------------------------------

struct DemodCheck {
  int layers = 0;
  double max_abs_error = 0;  // |reshape(A W B) - demodulate| over every entry
  double seconds = 0;
};

// Random f64 layers and styles; the diagonal-factor form against demodulate().
DemodCheck check_demod_equivalence(int layers, std::uint64_t seed);

struct RankCheck {
  SensitivityReport decomp, demod;
  double seconds = 0;
};

// One-hot style perturbation of a layer with orthonormal U, V, and of a
// demodulated layer of the same shape.
RankCheck check_rank_one(std::uint64_t seed, double delta = 0.5);

// Text and JSON renderings used by `verify`.
std::string verify_text(const DemodCheck& d, const RankCheck& r);
std::string verify_json(const DemodCheck& d, const RankCheck& r);

}  // namespace stwo
