#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stwo/adam.hpp"
#include "stwo/net.hpp"

namespace stwo {

using Latent = std::vector<double>;

// a + (b - a) * t
Latent lerp(const Latent& a, const Latent& b, double t);

// Sum over `levels` pyramid levels (full, /2, /4, ... by 2x2 averaging) of the
// mean squared difference. Inputs are c x H x W or b x c x H x W.
double pyramid_distance(const Tensor<double>& a, const Tensor<double>& b, int levels = 3);

// What the path-length metrics need from a generator.
struct Synthesizer {
  // False for single-latent models: w1 and w2 are then the same vector.
  bool split = true;
  // One intermediate latent from mapping network `which` (1 or 2).
  std::function<Latent(std::mt19937_64& rng, int which)> sample;
  // Top-resolution RGB, 1 x 3 x H x W.
  std::function<Tensor<double>(const Latent& w1, const Latent& w2)> render;
};

enum class PplSpace { w, w1, w2, w1_orthogonal };
const char* to_string(PplSpace s);
PplSpace parse_ppl_space(const std::string& s);

struct PplConfig {
  double epsilon = 1e-4;
  std::int64_t num_paths = 64;
  PplSpace space = PplSpace::w1_orthogonal;
  int distance_levels = 3;  // pyramid_l2 depth
  std::uint64_t seed = 0;

  void validate() const;
};

struct PplResult {
  double value = 0;
  double std_error = 0;  // sample std / sqrt(N); 0 when N = 1
  std::vector<double> samples;
};

double standard_error(const std::vector<double>& samples);

// Interpolation path length in w (both halves together), w1 (w2 held per path)
// or w2 (w1 held per path). w1_orthogonal dispatches to ppl_orthogonal.
PplResult ppl(const Synthesizer& g, const PplConfig& cfg);
// Path length along random unit directions orthogonal to w1, w2 held per path.
PplResult ppl_orthogonal(const Synthesizer& g, const PplConfig& cfg);

// v ~ N(0, I) from `seed`, minus its component along w1, normalised.
Latent sample_orthonormal_direction(const Latent& w1, std::uint64_t seed);

struct EditRequest {
  Latent w1, direction;
  double alpha = 0;
  Latent w2;

  // Throws ContractError unless direction is unit length and orthogonal to w1.
  void validate() const;
};

// w1 + alpha * direction.
Latent edit_latent(const EditRequest& req);

// A generator evaluated in double precision with frozen weights, driven by
// integer seeds: w1 = map1(z(seed1)), w2 = map2(z(seed2)).
class InferenceModel {
 public:
  InferenceModel(const NetConfig& cfg, const ParameterSet<float>& weights);
  InferenceModel(const InferenceModel&) = delete;
  InferenceModel& operator=(const InferenceModel&) = delete;

  const NetConfig& config() const { return g_->config(); }
  const Generator<double>& generator() const { return *g_; }

  // z is standard normal from mt19937_64(seed). The baseline uses w1 for both.
  Latent latent(std::uint64_t seed, int which) const;
  Latent w1(std::uint64_t seed1) const { return latent(seed1, 1); }
  Latent w2(std::uint64_t seed1, std::uint64_t seed2) const;

  Tensor<double> image(const Latent& w1, const Latent& w2) const;
  ImagePyramid<double> pyramid(const Latent& w1, const Latent& w2) const;

  Synthesizer synthesizer() const;

 private:
  ParameterSet<double> params_;
  std::unique_ptr<Generator<double>> g_;
};

Tensor<double> latent_tensor(const Latent& w);

}  // namespace stwo
