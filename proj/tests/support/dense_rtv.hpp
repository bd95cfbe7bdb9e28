#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "stwo/texdecomp.hpp"

namespace stwo::testing {

// Structure-only oracle: same reweighting, but each linear system is assembled
// densely from explicit forward-difference matrices and solved directly.
inline Planar dense_rtv(const Planar& img, const DecompositionParams& p) {
  const auto H = img.height, W = img.width, N = H * W;
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(N, N), dy = Eigen::MatrixXd::Zero(N, N);
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const auto i = y * W + x;
      if (x + 1 < W) dx(i, i) = -1, dx(i, i + 1) = 1;
      if (y + 1 < H) dy(i, i) = -1, dy(i, i + W) = 1;
    }
  Planar s = img;
  double sigma = p.sigma;
  for (int iter = 0; iter < p.max_iter; ++iter) {
    auto w = rtv_weights(s, sigma, p);
    Eigen::VectorXd wx = Eigen::Map<Eigen::VectorXd>(w.wx.data(), N);
    Eigen::VectorXd wy = Eigen::Map<Eigen::VectorXd>(w.wy.data(), N);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(N, N) +
                        (p.lambda / 2) * (dx.transpose() * wx.asDiagonal() * dx + dy.transpose() * wy.asDiagonal() * dy);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    for (std::int64_t c = 0; c < img.channels; ++c) {
      Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(img.data.data() + c * N, N);
      Eigen::VectorXd x = ldlt.solve(rhs);
      std::copy(x.data(), x.data() + N, s.data.begin() + c * N);
    }
    sigma = std::max(sigma / 2, 0.5);
  }
  return s;
}

// ||a - b||_2 / ||b||_2 over every value.
inline double relative_l2(const Planar& a, const Planar& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    den += b.data[i] * b.data[i];
  }
  return std::sqrt(num / den);
}

}  // namespace stwo::testing
