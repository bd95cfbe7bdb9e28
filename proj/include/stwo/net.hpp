#pragma once

// Generator with coarse (texture) and fine (RGB) halves, the split
// discriminator, and the single-chain multi-scale baseline discriminator.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "stwo/adam.hpp"
#include "stwo/pyramid.hpp"
#include "stwo/stylemod.hpp"

namespace stwo {

enum class Arch { stia, msg_baseline };

const char* to_string(Arch a);
Arch parse_arch(const std::string& s);
ModScheme parse_scheme(const std::string& s);

struct NetConfig {
  int n = 6;
  int r = 4;
  std::int64_t z_dim = 64;
  std::int64_t w_dim = 64;
  // Feature channels per resolution; missing entries fall back to
  // 64 for res <= 4, halving per level above that, never below 8.
  std::map<int, std::int64_t> channels;
  Arch arch = Arch::stia;
  ModScheme scheme = ModScheme::decomp;
  bool ortho_coarse = true;  // orthogonality penalty on decomposed layers with res <= r
  // Include the coarse tRGB heads in that set. Their U is 3 x c, so its columns
  // cannot be orthonormal and the penalty has a floor of c - 3 per head.
  bool ortho_trgb = false;
  // Orthonormal U, V at init; defaults to following ortho_coarse per layer.
  enum class FactorStart { follow_ortho, orthonormal, gaussian } factor_start = FactorStart::follow_ortho;

  std::int64_t ch(int res) const;
  void validate() const;
};

template <typename T>
struct ModConv {
  std::string name;
  int res = 0;
  bool coarse = false;
  bool is_head = false;
  AffineStyle<T> affine;
  StyledLayer<T> layer;
  Tensor<T> bias;
};

template <typename T>
struct LayerStyle {
  std::string name;
  int res = 0;
  bool coarse = false;
  Tensor<T> style;  // b x in_channels
};

template <typename T>
class Generator {
 public:
  Generator(const NetConfig& cfg, ParameterSet<T>& params, std::mt19937_64& rng);

  const NetConfig& config() const { return cfg_; }

  // w = Linear_which(rms_normalize(z)); z is {z_dim} or b x z_dim. The baseline
  // architecture has only map 1.
  Tensor<T> map_latent(const Tensor<T>& z, int which) const;

  // Coarse half: features at res r plus one head per block (texture heads for
  // stia, RGB heads for the baseline).
  struct CoarseOut {
    Tensor<T> features;
    std::map<int, Tensor<T>> heads;
  };
  CoarseOut coarse(const Tensor<T>& w1) const;
  std::map<int, Tensor<T>> fine(const Tensor<T>& features, const Tensor<T>& w2) const;

  // stia: texture 3..r from w1, rgb r+1..n from (coarse features, w2).
  // baseline: pass the same w twice; every head lands in rgb.
  ImagePyramid<T> forward(const Tensor<T>& w1, const Tensor<T>& w2) const;

  // Top-resolution RGB only.
  Tensor<T> image(const Tensor<T>& w1, const Tensor<T>& w2) const;

  // Every modulated layer's style vector, in network order.
  std::vector<LayerStyle<T>> styles(const Tensor<T>& w1, const Tensor<T>& w2) const;

  const std::vector<ModConv<T>>& layers() const { return convs_; }

  // Layers whose U, V receive the orthogonality penalty.
  std::vector<const DecompLayer<T>*> ortho_layers() const;
  // alpha * sum of ortho_penalty over ortho_layers(); a zero scalar when empty.
  Tensor<T> ortho_term(T alpha) const;
  // Mean ||U^T U - I||^2 + ||V^T V - I||^2 over ortho_layers(), off the tape.
  double mean_gram_deviation() const;

 private:
  Tensor<T> run_block(const Tensor<T>& x, int res, const Tensor<T>& w) const;
  Tensor<T> run_head(const Tensor<T>& x, int res, const Tensor<T>& w) const;
  Tensor<T> apply(const ModConv<T>& c, const Tensor<T>& x, const Tensor<T>& w) const;

  NetConfig cfg_;
  Tensor<T> map_w_[2], map_b_[2];
  Tensor<T> const_;
  std::vector<ModConv<T>> convs_;
  std::map<int, std::size_t> block_index_;  // first conv of the block at res
  std::map<int, std::size_t> head_index_;
};

template <typename T>
struct Conv {
  Tensor<T> weight, bias;
};

// conv3x3 (in + aux -> ch(res)) -> lrelu -> conv3x3 (-> ch(res-1)) -> lrelu -> down 2x.
template <typename T>
struct DBlock {
  int res = 0;
  std::int64_t aux = 0;
  Conv<T> conv0, conv1;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(const NetConfig& cfg, ParameterSet<T>& params, std::mt19937_64& rng);

  const NetConfig& config() const { return cfg_; }

  struct Scores {
    Tensor<T> score, d1, d2;  // b x 1 each; d1, d2 undefined for the baseline
  };

  // Dispatches on the architecture.
  Scores forward(const ImagePyramid<T>& pyr) const;

  // Split passes; score = d1 + d2.
  Tensor<T> d1(const ImagePyramid<T>& pyr) const;
  Tensor<T> d2(const ImagePyramid<T>& pyr) const;
  // Single chain reading rgb levels 3..n.
  Tensor<T> msg(const ImagePyramid<T>& pyr) const;

  const std::map<int, DBlock<T>>& blocks() const { return blocks_; }

 private:
  Tensor<T> block(int res, const Tensor<T>& x, const Tensor<T>* aux) const;
  Tensor<T> head(const Tensor<T>& x) const;

  NetConfig cfg_;
  Conv<T> from_rgb_, from_texture_;
  std::map<int, DBlock<T>> blocks_;
  Tensor<T> out_w_, out_b_;
};

// Every level the discriminator reads, in the order forward() consumes them.
template <typename T>
std::vector<Tensor<T>> pyramid_inputs(const ImagePyramid<T>& pyr);

}  // namespace stwo
