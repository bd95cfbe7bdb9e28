#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stwo/tensor.hpp"

namespace stwo {

// 8-bit RGB, row-major, interleaved.
struct Rgb8 {
  std::int64_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

// (x + 1) * 127.5, rounded half to even, clamped to [0, 255].
std::uint8_t to_byte(double x);

// One 3 x H x W image of a batch (values in [-1, 1]) as 8-bit RGB.
template <typename T>
Rgb8 to_rgb8(const Tensor<T>& batch, std::int64_t index);

// 1 x 3 x H x W in [-1, 1].
template <typename T>
Tensor<T> from_rgb8(const Rgb8& img);

// Gray, palette and alpha inputs are converted to RGB (alpha dropped).
Rgb8 read_png(const std::filesystem::path& path);
Rgb8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Rgb8& img);
void write_png(const std::filesystem::path& path, const Rgb8& img);

}  // namespace stwo
