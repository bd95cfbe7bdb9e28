#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stwo/adam.hpp"
#include "stwo/net.hpp"
#include "stwo/texdecomp.hpp"

namespace stwo {

// The six ablation configurations.
enum class ConfigId { baseline, A, B, C, D, stgan_wo };

const char* to_string(ConfigId id);
ConfigId parse_config_id(const std::string& s);
// Sets scheme, ortho flag and architecture from the id.
void apply_config_id(NetConfig& net, ConfigId id);

struct TrainConfig {
  ConfigId config_id = ConfigId::stgan_wo;
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  double r1_gamma = 10.0;
  double ortho_alpha = 1.0;
  std::int64_t batch = 8;
  std::int64_t steps = 200;
  std::uint64_t seed = 0;
  double ema_beta = 0.999;
  bool ema_enabled = true;
  std::string dataset;                 // directory of PNGs; empty selects the synthetic corpus
  std::int64_t synthetic_images = 64;  // corpus size when synthetic
  DecompMethod decomposition = DecompMethod::rtv;
  std::string out_dir;                 // log and checkpoints; empty disables both
  std::int64_t checkpoint_every = 0;   // 0: only at the end
  NetConfig net;

  // Reconciles net with config_id and checks ranges.
  void finalize();
};

std::string to_json(const TrainConfig& cfg);
// Unknown keys are rejected; missing keys keep their defaults.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);

// ---- losses ----------------------------------------------------------------

template <typename T>
struct AdversarialLosses {
  Tensor<T> loss_g, loss_d;  // scalars, batch means
};

// loss_d = softplus(d_fake) + softplus(-d_real); loss_g = softplus(-d_fake).
template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake);

template <typename T>
using ScoreFn = std::function<Tensor<T>(const ImagePyramid<T>&)>;

// (gamma / 2) * mean over the batch of sum over levels of ||d score / d level||^2,
// built so that it can itself be differentiated.
template <typename T>
Tensor<T> r1_penalty(const ScoreFn<T>& score, const ImagePyramid<T>& real, T gamma);
template <typename T>
Tensor<T> r1_penalty(const Discriminator<T>& d, const ImagePyramid<T>& real, T gamma);

// loss_g plus the orthogonality term of every regularised layer; returns loss_g
// itself when there are none.
template <typename T>
Tensor<T> generator_objective(const Tensor<T>& loss_g, const Generator<T>& g, T ortho_alpha);

// ---- data -------------------------------------------------------------------

// Colored ellipses with sinusoidal texture overlays, b x 3 x 2^n x 2^n in [-1, 1].
Tensor<float> synthetic_images(std::int64_t count, int n, std::uint64_t seed);

// PNGs under `dir` (sorted by name): center square crop, nearest resize to the
// power of two closest to the crop (at least 2^n), then 2x2 averaging down to 2^n.
Tensor<float> load_image_dir(const std::filesystem::path& dir, int n);

// Rows `index` of a batch-major tensor.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& t, const std::vector<std::int64_t>& index);

// Precomputed real pyramids for the whole corpus.
struct RealData {
  std::int64_t count = 0;
  ImagePyramid<float> pyramid;

  ImagePyramid<float> batch(const std::vector<std::int64_t>& index) const;
};

RealData prepare_real_data(const Tensor<float>& images, const NetConfig& net, DecompMethod method);

// ---- training state -----------------------------------------------------------

struct StepStats {
  std::uint64_t step = 0;
  double loss_g = 0, loss_d = 0, r1 = 0, ortho = 0, seconds = 0;
};

struct TrainState {
  TrainConfig cfg;
  ParameterSet<float> g_params, d_params, ema_params;
  std::unique_ptr<Generator<float>> g, ema;
  std::unique_ptr<Discriminator<float>> d;
  std::mt19937_64 rng;
  std::uint64_t step = 0;

  // Builds and initialises the model from cfg.seed.
  explicit TrainState(TrainConfig config);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  // Generator used for sampling: EMA when enabled.
  const Generator<float>& sampler() const { return cfg.ema_enabled ? *ema : *g; }
  const ParameterSet<float>& sampler_params() const { return cfg.ema_enabled ? ema_params : g_params; }
};

// Standard normal b x dim, one fresh distribution per call.
template <typename T>
Tensor<T> normal_latents(std::mt19937_64& rng, std::int64_t b, std::int64_t dim);

// Intermediate latents for a batch of z pairs; the baseline maps z1 only and
// returns it twice.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> map_pair(const Generator<T>& g, const Tensor<T>& z1, const Tensor<T>& z2);

// One discriminator update (adversarial + R1) and one generator update; EMA
// after. Non-finite values abort with a NumericError listing parameter stats.
StepStats train_step(TrainState& state, const RealData& data);

// Runs cfg.steps steps (from state.step), writing the CSV log and checkpoints
// when cfg.out_dir is set. `on_step` sees every step's stats.
void train(TrainState& state, const RealData& data, const std::function<void(const StepStats&)>& on_step = {});

// ---- checkpoints --------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);
std::unique_ptr<TrainState> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Exact equality of config, parameters, optimizer state, RNG and step.
bool states_equal(const TrainState& a, const TrainState& b);

}  // namespace stwo
