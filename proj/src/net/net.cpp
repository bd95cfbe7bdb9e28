#include "stwo/net.hpp"

#include <cmath>

#include "stwo/errors.hpp"
#include "stwo/ops.hpp"

namespace stwo {

const char* to_string(Arch a) { return a == Arch::stia ? "stia" : "msg_baseline"; }

Arch parse_arch(const std::string& s) {
  if (s == "stia") return Arch::stia;
  if (s == "msg_baseline") return Arch::msg_baseline;
  throw ConfigError("unknown architecture '" + s + "'");
}

ModScheme parse_scheme(const std::string& s) {
  if (s == "demod") return ModScheme::demod;
  if (s == "decomp") return ModScheme::decomp;
  throw ConfigError("unknown modulation scheme '" + s + "'");
}

std::int64_t NetConfig::ch(int res) const {
  if (auto it = channels.find(res); it != channels.end()) return it->second;
  std::int64_t c = 64;
  for (int k = 4; k < res && c > 8; ++k) c /= 2;
  return c;
}

void NetConfig::validate() const {
  check_levels(n, r);
  if (z_dim < 1 || w_dim < 1) throw ConfigError("latent sizes must be positive");
  for (int res = 2; res <= n; ++res)
    if (ch(res) < 1) throw ConfigError("channel count for res " + std::to_string(res) + " must be positive");
}

namespace {

template <typename T>
Tensor<T> normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.mutable_data()) v = static_cast<T>(nd(rng));
  return t;
}

template <typename T>
Tensor<T> lrelu(const Tensor<T>& x) {
  return ops::leaky_relu(x, T(0.2));
}

template <typename T>
Tensor<T> as_batch(const Tensor<T>& w) {
  return w.ndim() == 1 ? ops::reshape(w, {1, w.dim(0)}) : w;
}

template <typename T>
Conv<T> make_conv(ParameterSet<T>& params, const std::string& name, Shape shape, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
  const auto out = shape[0];
  Conv<T> c;
  c.weight = params.add(name + ".weight", normal<T>(shape, std::sqrt(2.0 / fan_in), rng));
  c.bias = params.add(name + ".bias", Tensor<T>({out}));
  return c;
}

template <typename T>
Tensor<T> run_conv(const Conv<T>& c, const Tensor<T>& x) {
  return ops::add_bias(ops::conv2d(x, c.weight, static_cast<int>((c.weight.dim(2) - 1) / 2)), c.bias);
}

}  // namespace

// ---- generator -------------------------------------------------------------

template <typename T>
Generator<T>::Generator(const NetConfig& cfg, ParameterSet<T>& params, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int maps = cfg_.arch == Arch::stia ? 2 : 1;
  for (int m = 0; m < maps; ++m) {
    const std::string name = "g.map" + std::to_string(m + 1);
    map_w_[m] = params.add(name + ".weight", normal<T>({cfg_.z_dim, cfg_.w_dim}, 1.0 / std::sqrt(double(cfg_.z_dim)), rng));
    map_b_[m] = params.add(name + ".bias", Tensor<T>({cfg_.w_dim}));
  }
  const_ = params.add("g.const", normal<T>({1, cfg_.ch(2), 4, 4}, 1.0, rng));

  auto add = [&](const std::string& name, int res, bool head, KernelDims dims) {
    ModConv<T> c;
    c.name = name;
    c.res = res;
    c.coarse = res <= cfg_.r;
    c.is_head = head;
    c.affine = make_affine<T>(params, name + ".affine", cfg_.w_dim, dims.in, rng);
    if (cfg_.scheme == ModScheme::demod) {
      c.layer = make_demod_layer<T>(params, name, dims, rng);
    } else {
      const bool ortho = cfg_.ortho_coarse && c.coarse && (!head || cfg_.ortho_trgb);
      FactorInit init = ortho ? FactorInit::orthonormal : FactorInit::gaussian;
      if (cfg_.factor_start == NetConfig::FactorStart::orthonormal) init = FactorInit::orthonormal;
      if (cfg_.factor_start == NetConfig::FactorStart::gaussian) init = FactorInit::gaussian;
      c.layer = make_decomp_layer<T>(params, name, dims, ortho, init, rng);
    }
    c.bias = params.add(name + ".bias", Tensor<T>({dims.out}));
    convs_.push_back(std::move(c));
  };

  for (int res = 3; res <= cfg_.n; ++res) {
    const std::string base = "g.b" + std::to_string(res);
    const auto cin = cfg_.ch(res - 1), c = cfg_.ch(res);
    block_index_[res] = convs_.size();
    add(base + ".conv0", res, false, {c, cin, 3, 3});
    add(base + ".conv1", res, false, {c, c, 3, 3});
    head_index_[res] = convs_.size();
    add(base + ".trgb", res, true, {3, c, 1, 1});
  }
}

template <typename T>
Tensor<T> Generator<T>::map_latent(const Tensor<T>& z, int which) const {
  if (which != 1 && which != 2) throw ContractError("map_latent: which must be 1 or 2");
  if (!map_w_[which - 1].defined()) throw ContractError("map_latent: this architecture has a single latent map");
  const auto zb = as_batch(z);
  if (zb.ndim() != 2 || zb.dim(1) != cfg_.z_dim)
    throw DimensionError("map_latent: z has shape " + shape_str(z.shape()) + ", z_dim is " + std::to_string(cfg_.z_dim));
  auto w = ops::add_bias(ops::matmul(ops::rms_normalize(zb), map_w_[which - 1]), map_b_[which - 1]);
  return z.ndim() == 1 ? ops::reshape(w, {cfg_.w_dim}) : w;
}

template <typename T>
Tensor<T> Generator<T>::apply(const ModConv<T>& c, const Tensor<T>& x, const Tensor<T>& w) const {
  auto y = ops::add_bias(modulated_conv_forward(x, c.layer, c.affine, w), c.bias);
  return c.is_head ? ops::tanh(y) : lrelu(y);
}

template <typename T>
Tensor<T> Generator<T>::run_block(const Tensor<T>& x, int res, const Tensor<T>& w) const {
  const auto i = block_index_.at(res);
  auto h = apply(convs_[i], ops::upsample2x(x), w);
  return apply(convs_[i + 1], h, w);
}

template <typename T>
Tensor<T> Generator<T>::run_head(const Tensor<T>& x, int res, const Tensor<T>& w) const {
  return apply(convs_[head_index_.at(res)], x, w);
}

template <typename T>
typename Generator<T>::CoarseOut Generator<T>::coarse(const Tensor<T>& w1) const {
  const auto w = as_batch(w1);
  if (w.ndim() != 2 || w.dim(1) != cfg_.w_dim)
    throw DimensionError("generator: w1 has shape " + shape_str(w1.shape()));
  CoarseOut out;
  auto x = ops::repeat_batch(const_, w.dim(0));
  for (int res = 3; res <= cfg_.r; ++res) {
    x = run_block(x, res, w);
    out.heads[res] = run_head(x, res, w);
  }
  out.features = x;
  return out;
}

template <typename T>
std::map<int, Tensor<T>> Generator<T>::fine(const Tensor<T>& features, const Tensor<T>& w2) const {
  const auto w = as_batch(w2);
  if (w.ndim() != 2 || w.dim(1) != cfg_.w_dim || w.dim(0) != features.dim(0))
    throw DimensionError("generator: w2 has shape " + shape_str(w2.shape()) + " for batch " +
                         std::to_string(features.dim(0)));
  std::map<int, Tensor<T>> heads;
  auto x = features;
  for (int res = cfg_.r + 1; res <= cfg_.n; ++res) {
    x = run_block(x, res, w);
    heads[res] = run_head(x, res, w);
  }
  return heads;
}

template <typename T>
ImagePyramid<T> Generator<T>::forward(const Tensor<T>& w1, const Tensor<T>& w2) const {
  ImagePyramid<T> pyr;
  pyr.n = cfg_.n;
  pyr.r = cfg_.r;
  auto c = coarse(w1);
  pyr.rgb = fine(c.features, w2);
  if (cfg_.arch == Arch::stia)
    pyr.texture = std::move(c.heads);
  else
    pyr.rgb.merge(c.heads);
  return pyr;
}

template <typename T>
Tensor<T> Generator<T>::image(const Tensor<T>& w1, const Tensor<T>& w2) const {
  return fine(coarse(w1).features, w2).at(cfg_.n);
}

template <typename T>
std::vector<LayerStyle<T>> Generator<T>::styles(const Tensor<T>& w1, const Tensor<T>& w2) const {
  std::vector<LayerStyle<T>> out;
  for (const auto& c : convs_) out.push_back({c.name, c.res, c.coarse, c.affine(as_batch(c.coarse ? w1 : w2))});
  return out;
}

template <typename T>
std::vector<const DecompLayer<T>*> Generator<T>::ortho_layers() const {
  std::vector<const DecompLayer<T>*> out;
  for (const auto& c : convs_)
    if (const auto* d = std::get_if<DecompLayer<T>>(&c.layer); d && d->ortho_regularized) out.push_back(d);
  return out;
}

template <typename T>
Tensor<T> Generator<T>::ortho_term(T alpha) const {
  Tensor<T> total;
  for (const auto* d : ortho_layers()) {
    auto p = ortho_penalty(*d, alpha);
    total = total.defined() ? ops::add(total, p) : p;
  }
  return total.defined() ? total : Tensor<T>::scalar(T(0));
}

template <typename T>
double Generator<T>::mean_gram_deviation() const {
  const auto layers = ortho_layers();
  if (layers.empty()) return 0.0;
  double acc = 0;
  for (const auto* d : layers) acc += gram_deviation(d->u) + gram_deviation(d->v);
  return acc / static_cast<double>(layers.size());
}

// ---- discriminator -----------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(const NetConfig& cfg, ParameterSet<T>& params, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.n, r = cfg_.r;
  from_rgb_ = make_conv<T>(params, "d.frgb", {cfg_.ch(n), 3, 1, 1}, rng);
  if (cfg_.arch == Arch::stia) from_texture_ = make_conv<T>(params, "d.ftex", {cfg_.ch(r), 3, 1, 1}, rng);
  for (int res = n; res >= 3; --res) {
    DBlock<T> b;
    b.res = res;
    if (cfg_.arch == Arch::stia)
      b.aux = (res != n && res != r) ? 3 : 0;
    else
      b.aux = res != n ? 3 : 0;
    const std::string name = "d.b" + std::to_string(res);
    b.conv0 = make_conv<T>(params, name + ".conv0", {cfg_.ch(res), cfg_.ch(res) + b.aux, 3, 3}, rng);
    b.conv1 = make_conv<T>(params, name + ".conv1", {cfg_.ch(res - 1), cfg_.ch(res), 3, 3}, rng);
    blocks_[res] = std::move(b);
  }
  const auto flat = cfg_.ch(2) * 16;
  out_w_ = params.add("d.out.weight", normal<T>({flat, 1}, 1.0 / std::sqrt(double(flat)), rng));
  out_b_ = params.add("d.out.bias", Tensor<T>({1}));
}

template <typename T>
Tensor<T> Discriminator<T>::block(int res, const Tensor<T>& x, const Tensor<T>* aux) const {
  const auto& b = blocks_.at(res);
  Tensor<T> h = x;
  if (b.aux > 0) {
    // A missing aux input (D1 below the split) is an all-zero slot.
    h = aux ? ops::concat_channels(x, *aux) : ops::concat_channels(x, Tensor<T>({x.dim(0), b.aux, x.dim(2), x.dim(3)}));
  }
  h = lrelu(run_conv(b.conv0, h));
  h = lrelu(run_conv(b.conv1, h));
  return ops::downsample2x(h);
}

template <typename T>
Tensor<T> Discriminator<T>::head(const Tensor<T>& x) const {
  auto flat = ops::reshape(x, {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
  return ops::add_bias(ops::matmul(flat, out_w_), out_b_);
}

template <typename T>
Tensor<T> Discriminator<T>::d1(const ImagePyramid<T>& pyr) const {
  if (cfg_.arch != Arch::stia) throw ContractError("d1 is only defined for the split discriminator");
  const int n = cfg_.n, r = cfg_.r;
  auto x = lrelu(run_conv(from_rgb_, pyramid_level(pyr.rgb, n, "rgb")));
  for (int res = n; res >= 3; --res) {
    const Tensor<T>* aux = (res < n && res > r) ? &pyramid_level(pyr.rgb, res, "rgb") : nullptr;
    x = block(res, x, aux);
  }
  return head(x);
}

template <typename T>
Tensor<T> Discriminator<T>::d2(const ImagePyramid<T>& pyr) const {
  if (cfg_.arch != Arch::stia) throw ContractError("d2 is only defined for the split discriminator");
  const int r = cfg_.r;
  auto x = lrelu(run_conv(from_texture_, pyramid_level(pyr.texture, r, "texture")));
  for (int res = r; res >= 3; --res) {
    const Tensor<T>* aux = res < r ? &pyramid_level(pyr.texture, res, "texture") : nullptr;
    x = block(res, x, aux);
  }
  return head(x);
}

template <typename T>
Tensor<T> Discriminator<T>::msg(const ImagePyramid<T>& pyr) const {
  if (cfg_.arch != Arch::msg_baseline) throw ContractError("msg() is only defined for the baseline discriminator");
  const int n = cfg_.n;
  auto x = lrelu(run_conv(from_rgb_, pyramid_level(pyr.rgb, n, "rgb")));
  for (int res = n; res >= 3; --res) {
    const Tensor<T>* aux = res < n ? &pyramid_level(pyr.rgb, res, "rgb") : nullptr;
    x = block(res, x, aux);
  }
  return head(x);
}

template <typename T>
typename Discriminator<T>::Scores Discriminator<T>::forward(const ImagePyramid<T>& pyr) const {
  Scores s;
  if (cfg_.arch == Arch::msg_baseline) {
    s.score = msg(pyr);
    return s;
  }
  s.d1 = d1(pyr);
  s.d2 = d2(pyr);
  s.score = ops::add(s.d1, s.d2);
  return s;
}

template <typename T>
std::vector<Tensor<T>> pyramid_inputs(const ImagePyramid<T>& pyr) {
  std::vector<Tensor<T>> out;
  for (auto it = pyr.rgb.rbegin(); it != pyr.rgb.rend(); ++it) out.push_back(it->second);
  for (auto it = pyr.texture.rbegin(); it != pyr.texture.rend(); ++it) out.push_back(it->second);
  return out;
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template std::vector<Tensor<float>> pyramid_inputs(const ImagePyramid<float>&);
template std::vector<Tensor<double>> pyramid_inputs(const ImagePyramid<double>&);

}  // namespace stwo
