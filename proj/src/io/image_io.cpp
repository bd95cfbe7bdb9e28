#include "stwo/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stwo/errors.hpp"

namespace stwo {

std::uint8_t to_byte(double x) {
  const double v = std::nearbyint((x + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

template <typename T>
Rgb8 to_rgb8(const Tensor<T>& batch, std::int64_t index) {
  if (batch.ndim() != 4 || batch.dim(1) != 3 || index < 0 || index >= batch.dim(0))
    throw DimensionError("to_rgb8: expected b x 3 x H x W, got " + shape_str(batch.shape()));
  Rgb8 img{batch.dim(3), batch.dim(2), {}};
  const auto plane = img.width * img.height;
  img.pixels.resize(static_cast<std::size_t>(plane * 3));
  const T* src = batch.ptr() + index * 3 * plane;
  for (std::int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) img.pixels[static_cast<std::size_t>(p * 3 + c)] = to_byte(src[c * plane + p]);
  return img;
}

template <typename T>
Tensor<T> from_rgb8(const Rgb8& img) {
  const auto plane = img.width * img.height;
  Tensor<T> t({1, 3, img.height, img.width});
  auto d = t.mutable_data();
  for (std::int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      d[static_cast<std::size_t>(c * plane + p)] = static_cast<T>(img.pixels[static_cast<std::size_t>(p * 3 + c)] / 127.5 - 1.0);
  return t;
}

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG data");
  std::memcpy(out, cur->bytes->data() + cur->pos, len);
  cur->pos += len;
}

void write_to_memory(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_noop(png_structp) {}

// libpng reports errors by longjmp; the message is parked here first.
struct ErrorSlot {
  char message[256] = {};
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof slot->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Rgb8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file");
  ErrorSlot err;
  ReadCursor cur{&bytes, 0};
  Rgb8 img;
  std::vector<png_bytep> rows;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(std::string("PNG: ") + err.message);
  }
  png_set_read_fn(png, &cur, read_from_memory);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(img.width * 3)) png_error(png, "unexpected row layout");
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * 3));
  rows.resize(static_cast<std::size_t>(img.height));
  for (std::int64_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Rgb8 read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::vector<std::uint8_t> encode_png(const Rgb8& img) {
  if (img.width < 1 || img.height < 1 || img.pixels.size() != static_cast<std::size_t>(img.width * img.height * 3))
    throw DimensionError("encode_png: pixel buffer does not match dimensions");
  ErrorSlot err;
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(std::string("PNG: ") + err.message);
  }
  png_set_write_fn(png, &out, write_to_memory, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Rgb8& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

template Rgb8 to_rgb8(const Tensor<float>&, std::int64_t);
template Rgb8 to_rgb8(const Tensor<double>&, std::int64_t);
template Tensor<float> from_rgb8(const Rgb8&);
template Tensor<double> from_rgb8(const Rgb8&);

}  // namespace stwo
