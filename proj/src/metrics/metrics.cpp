#include "stwo/metrics.hpp"

#include <cmath>
#include <numeric>

#include "stwo/errors.hpp"
#include "stwo/ops.hpp"

namespace stwo {

Latent lerp(const Latent& a, const Latent& b, double t) {
  if (a.size() != b.size())
    throw DimensionError("lerp: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " differ");
  Latent out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + (b[i] - a[i]) * t;
  return out;
}

namespace {

// Planes of a c x H x W or b x c x H x W tensor, with H and W.
struct Planes {
  std::int64_t count, h, w;
};

Planes planes_of(const Tensor<double>& t) {
  if (t.ndim() != 3 && t.ndim() != 4) throw DimensionError("pyramid_distance: expected a 3-D or 4-D image, got " + shape_str(t.shape()));
  const auto h = t.dim(t.ndim() - 2), w = t.dim(t.ndim() - 1);
  return {t.numel() / (h * w), h, w};
}

std::vector<double> halve(const std::vector<double>& x, const Planes& p) {
  const auto h = p.h / 2, w = p.w / 2;
  std::vector<double> out(static_cast<std::size_t>(p.count * h * w));
  for (std::int64_t c = 0; c < p.count; ++c)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        auto at = [&](std::int64_t yy, std::int64_t xc) { return x[static_cast<std::size_t>((c * p.h + yy) * p.w + xc)]; };
        out[static_cast<std::size_t>((c * h + y) * w + xx)] =
            (at(2 * y, 2 * xx) + at(2 * y, 2 * xx + 1) + at(2 * y + 1, 2 * xx) + at(2 * y + 1, 2 * xx + 1)) / 4.0;
      }
  return out;
}

}  // namespace

double pyramid_distance(const Tensor<double>& a, const Tensor<double>& b, int levels) {
  if (a.shape() != b.shape())
    throw DimensionError("pyramid_distance: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  if (levels < 1) throw ContractError("pyramid_distance: levels must be >= 1");
  auto p = planes_of(a);
  std::vector<double> diff(static_cast<std::size_t>(a.numel()));
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.data()[i] - b.data()[i];
  // Averaging is linear, so pooling the difference equals differencing the pools.
  double total = 0;
  for (int level = 0; level < levels; ++level) {
    if (level > 0) {
      if (p.h % 2 || p.w % 2)
        throw DimensionError("pyramid_distance: " + std::to_string(p.h) + " x " + std::to_string(p.w) +
                             " cannot be halved for level " + std::to_string(level));
      diff = halve(diff, p);
      p.h /= 2;
      p.w /= 2;
    }
    double sq = 0;
    for (double v : diff) sq += v * v;
    total += sq / static_cast<double>(diff.size());
  }
  return total;
}

const char* to_string(PplSpace s) {
  switch (s) {
    case PplSpace::w: return "w";
    case PplSpace::w1: return "w1";
    case PplSpace::w2: return "w2";
    case PplSpace::w1_orthogonal: return "w1_orthogonal";
  }
  return "?";
}

PplSpace parse_ppl_space(const std::string& s) {
  for (auto v : {PplSpace::w, PplSpace::w1, PplSpace::w2, PplSpace::w1_orthogonal})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown space '" + s + "' (expected w, w1, w2 or w1_orthogonal)");
}

void PplConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (num_paths < 1) throw ConfigError("num_paths must be >= 1");
  if (distance_levels < 1) throw ConfigError("distance_levels must be >= 1");
}

double standard_error(const std::vector<double>& samples) {
  const auto n = samples.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

namespace {

PplResult summarize(std::vector<double> samples) {
  PplResult r;
  r.value = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  r.std_error = standard_error(samples);
  r.samples = std::move(samples);
  return r;
}

}  // namespace

PplResult ppl(const Synthesizer& g, const PplConfig& cfg) {
  cfg.validate();
  if (cfg.space == PplSpace::w1_orthogonal) return ppl_orthogonal(g, cfg);
  if (!g.split && cfg.space != PplSpace::w)
    throw ConfigError(std::string("space ") + to_string(cfg.space) + " needs a model with separate w1 and w2");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double eps = cfg.epsilon;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(cfg.num_paths));
  for (std::int64_t i = 0; i < cfg.num_paths; ++i) {
    double d = 0;
    if (!g.split) {
      const auto a = g.sample(rng, 1), b = g.sample(rng, 1);
      const double t = uni(rng);
      const auto p = lerp(a, b, t), q = lerp(a, b, t + eps);
      d = pyramid_distance(g.render(p, p), g.render(q, q), cfg.distance_levels);
    } else if (cfg.space == PplSpace::w) {
      const auto a1 = g.sample(rng, 1), b1 = g.sample(rng, 1);
      const auto a2 = g.sample(rng, 2), b2 = g.sample(rng, 2);
      const double t = uni(rng);
      d = pyramid_distance(g.render(lerp(a1, b1, t), lerp(a2, b2, t)),
                           g.render(lerp(a1, b1, t + eps), lerp(a2, b2, t + eps)), cfg.distance_levels);
    } else {
      const int moving = cfg.space == PplSpace::w1 ? 1 : 2;
      const auto a = g.sample(rng, moving), b = g.sample(rng, moving);
      const auto fixed = g.sample(rng, 3 - moving);
      const double t = uni(rng);
      const auto p = lerp(a, b, t), q = lerp(a, b, t + eps);
      d = moving == 1 ? pyramid_distance(g.render(p, fixed), g.render(q, fixed), cfg.distance_levels)
                      : pyramid_distance(g.render(fixed, p), g.render(fixed, q), cfg.distance_levels);
    }
    samples.push_back(d / (eps * eps));
  }
  return summarize(std::move(samples));
}

PplResult ppl_orthogonal(const Synthesizer& g, const PplConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const double eps = cfg.epsilon;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(cfg.num_paths));
  for (std::int64_t i = 0; i < cfg.num_paths; ++i) {
    const auto w1 = g.sample(rng, 1);
    const auto dir = sample_orthonormal_direction(w1, rng());
    EditRequest req{w1, dir, eps, g.split ? g.sample(rng, 2) : w1};
    const auto moved = edit_latent(req);
    const auto& w2_after = g.split ? req.w2 : moved;
    const double d = pyramid_distance(g.render(w1, req.w2), g.render(moved, w2_after), cfg.distance_levels);
    samples.push_back(d / (eps * eps));
  }
  return summarize(std::move(samples));
}

namespace {

double dot(const Latent& a, const Latent& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Latent sample_orthonormal_direction(const Latent& w1, std::uint64_t seed) {
  const double n1 = std::sqrt(dot(w1, w1));
  if (!(n1 > 0)) throw ContractError("sample_orthonormal_direction: w1 must be nonzero");
  if (w1.size() < 2) throw ContractError("sample_orthonormal_direction: needs at least two dimensions");
  Latent unit(w1.size());
  for (std::size_t i = 0; i < w1.size(); ++i) unit[i] = w1[i] / n1;
  for (std::uint64_t s = seed;; ++s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> nd(0.0, 1.0);
    Latent v(w1.size());
    for (auto& x : v) x = nd(rng);
    const double before = std::sqrt(dot(v, v));
    // Project twice: the second pass removes what rounding left of the first.
    for (int pass = 0; pass < 2; ++pass) {
      const double c = dot(v, unit);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * unit[i];
    }
    const double n = std::sqrt(dot(v, v));
    if (!(n > 1e-8 * before)) continue;
    for (auto& x : v) x /= n;
    return v;
  }
}

void EditRequest::validate() const {
  if (w1.size() != direction.size()) throw ContractError("edit: w1 and direction lengths differ");
  if (!w2.empty() && w2.size() != w1.size()) throw ContractError("edit: w1 and w2 lengths differ");
  const double nd = std::sqrt(dot(direction, direction)), nw = std::sqrt(dot(w1, w1));
  if (std::abs(nd - 1.0) > 1e-9) throw ContractError("edit: direction is not unit length (norm " + std::to_string(nd) + ")");
  if (std::abs(dot(direction, w1)) >= 1e-6 * nw * nd) throw ContractError("edit: direction is not orthogonal to w1");
  if (!std::isfinite(alpha)) throw ContractError("edit: alpha must be finite");
}

Latent edit_latent(const EditRequest& req) {
  req.validate();
  Latent out(req.w1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = req.w1[i] + req.alpha * req.direction[i];
  return out;
}

Tensor<double> latent_tensor(const Latent& w) {
  return Tensor<double>({1, static_cast<std::int64_t>(w.size())}, w);
}

InferenceModel::InferenceModel(const NetConfig& cfg, const ParameterSet<float>& weights) {
  std::mt19937_64 scratch(0);
  g_ = std::make_unique<Generator<double>>(cfg, params_, scratch);
  params_.copy_from(weights, false);
  params_.set_requires_grad(false);
}

Latent InferenceModel::latent(std::uint64_t seed, int which) const {
  NoGradGuard ng;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor<double> z({config().z_dim});
  for (auto& v : z.mutable_data()) v = nd(rng);
  if (config().arch != Arch::stia) which = 1;
  const auto w = g_->map_latent(z, which);
  return Latent(w.data().begin(), w.data().end());
}

Latent InferenceModel::w2(std::uint64_t seed1, std::uint64_t seed2) const {
  return config().arch == Arch::stia ? latent(seed2, 2) : latent(seed1, 1);
}

Tensor<double> InferenceModel::image(const Latent& w1, const Latent& w2) const {
  NoGradGuard ng;
  return g_->image(latent_tensor(w1), latent_tensor(w2));
}

ImagePyramid<double> InferenceModel::pyramid(const Latent& w1, const Latent& w2) const {
  NoGradGuard ng;
  return g_->forward(latent_tensor(w1), latent_tensor(w2));
}

Synthesizer InferenceModel::synthesizer() const {
  Synthesizer s;
  s.split = config().arch == Arch::stia;
  s.sample = [this](std::mt19937_64& rng, int which) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor<double> z({config().z_dim});
    for (auto& v : z.mutable_data()) v = nd(rng);
    NoGradGuard ng;
    const auto w = g_->map_latent(z, config().arch == Arch::stia ? which : 1);
    return Latent(w.data().begin(), w.data().end());
  };
  s.render = [this](const Latent& w1, const Latent& w2) { return image(w1, w2); };
  return s;
}

}  // namespace stwo
