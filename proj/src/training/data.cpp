#include <algorithm>
#include <cmath>
#include <numbers>

#include "stwo/errors.hpp"
#include "stwo/image_io.hpp"
#include "stwo/training.hpp"

namespace stwo {

Tensor<float> synthetic_images(std::int64_t count, int n, std::uint64_t seed) {
  const std::int64_t S = std::int64_t{1} << n;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Tensor<float> out({count, 3, S, S});
  auto data = out.mutable_data();
  std::vector<double> img(static_cast<std::size_t>(3 * S * S));
  for (std::int64_t b = 0; b < count; ++b) {
    // Background: a base colour with a gentle linear gradient.
    double base[3], slope[3];
    for (int c = 0; c < 3; ++c) base[c] = uni(-0.7, 0.7), slope[c] = uni(-0.3, 0.3);
    const double gdir = uni(0.0, 2 * std::numbers::pi);
    for (int c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < S; ++y)
        for (std::int64_t x = 0; x < S; ++x) {
          const double t = ((x + 0.5) / S - 0.5) * std::cos(gdir) + ((y + 0.5) / S - 0.5) * std::sin(gdir);
          img[static_cast<std::size_t>((c * S + y) * S + x)] = base[c] + slope[c] * t;
        }
    const int ellipses = 1 + static_cast<int>(uni(0.0, 3.0));
    for (int e = 0; e < ellipses; ++e) {
      const double cx = uni(0.2, 0.8) * S, cy = uni(0.2, 0.8) * S;
      const double ax = uni(0.12, 0.35) * S, ay = uni(0.12, 0.35) * S, rot = uni(0.0, std::numbers::pi);
      double color[3];
      for (auto& c : color) c = uni(-0.9, 0.9);
      const double period = uni(3.0, 8.0), orient = uni(0.0, std::numbers::pi), amp = uni(0.1, 0.3),
                   phase = uni(0.0, 2 * std::numbers::pi);
      for (std::int64_t y = 0; y < S; ++y)
        for (std::int64_t x = 0; x < S; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double u = dx * std::cos(rot) + dy * std::sin(rot), v = -dx * std::sin(rot) + dy * std::cos(rot);
          if ((u * u) / (ax * ax) + (v * v) / (ay * ay) > 1.0) continue;
          const double ripple =
              amp * std::sin(2 * std::numbers::pi * (x * std::cos(orient) + y * std::sin(orient)) / period + phase);
          for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>((c * S + y) * S + x)] = color[c] + ripple;
        }
    }
    for (std::size_t i = 0; i < img.size(); ++i)
      data[static_cast<std::size_t>(b) * img.size() + i] = static_cast<float>(std::clamp(img[i], -1.0, 1.0));
  }
  return out;
}

Tensor<float> load_image_dir(const std::filesystem::path& dir, int n) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw ConfigError("no PNG files in " + dir.string());
  std::sort(files.begin(), files.end());

  const std::int64_t S = std::int64_t{1} << n;
  Tensor<float> out({static_cast<std::int64_t>(files.size()), 3, S, S});
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto img = read_png(files[f]);
    const auto side = std::min(img.width, img.height);
    const auto x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
    std::int64_t P = std::int64_t{1} << static_cast<int>(std::lround(std::log2(static_cast<double>(side))));
    P = std::max(P, S);
    // Nearest resample of the centre square to P x P.
    std::vector<double> buf(static_cast<std::size_t>(3 * P * P));
    for (std::int64_t y = 0; y < P; ++y)
      for (std::int64_t x = 0; x < P; ++x) {
        const auto sy = y0 + std::min(side - 1, (2 * y + 1) * side / (2 * P));
        const auto sx = x0 + std::min(side - 1, (2 * x + 1) * side / (2 * P));
        for (int c = 0; c < 3; ++c)
          buf[static_cast<std::size_t>((c * P + y) * P + x)] =
              img.pixels[static_cast<std::size_t>((sy * img.width + sx) * 3 + c)] / 127.5 - 1.0;
      }
    for (; P > S; P /= 2) {
      const auto H = P / 2;
      std::vector<double> half(static_cast<std::size_t>(3 * H * H));
      for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < H; ++y)
          for (std::int64_t x = 0; x < H; ++x) {
            auto at = [&](std::int64_t yy, std::int64_t xx) { return buf[static_cast<std::size_t>((c * P + yy) * P + xx)]; };
            half[static_cast<std::size_t>((c * H + y) * H + x)] =
                (at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) / 4.0;
          }
      buf.swap(half);
    }
    auto dst = out.mutable_data().subspan(f * buf.size(), buf.size());
    std::transform(buf.begin(), buf.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
  }
  return out;
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& t, const std::vector<std::int64_t>& index) {
  if (t.ndim() < 1) throw DimensionError("take_rows needs a batch axis");
  const auto row = t.numel() / t.dim(0);
  auto shape = t.shape();
  shape[0] = static_cast<std::int64_t>(index.size());
  Tensor<T> out(shape);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= t.dim(0)) throw DimensionError("take_rows: index out of range");
    std::copy_n(t.ptr() + index[k] * row, row, out.mutable_ptr() + static_cast<std::int64_t>(k) * row);
  }
  return out;
}

ImagePyramid<float> RealData::batch(const std::vector<std::int64_t>& index) const {
  ImagePyramid<float> out;
  out.n = pyramid.n;
  out.r = pyramid.r;
  for (const auto& [res, t] : pyramid.rgb) out.rgb[res] = take_rows(t, index);
  for (const auto& [res, t] : pyramid.texture) out.texture[res] = take_rows(t, index);
  return out;
}

RealData prepare_real_data(const Tensor<float>& images, const NetConfig& net, DecompMethod method) {
  RealData d;
  d.count = images.dim(0);
  d.pyramid = net.arch == Arch::stia ? build_real_pyramid(images, net.n, net.r, method)
                                     : build_rgb_pyramid(images, net.n, net.r);
  return d;
}

template Tensor<float> take_rows(const Tensor<float>&, const std::vector<std::int64_t>&);
template Tensor<double> take_rows(const Tensor<double>&, const std::vector<std::int64_t>&);

}  // namespace stwo
