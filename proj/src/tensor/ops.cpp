#include "stwo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conv_kernels.hpp"

namespace stwo::ops {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// (batch, channels, trailing size) view of a 2-D or 4-D tensor.
struct ChannelView {
  std::int64_t batch, channels, inner;
};

template <typename T>
ChannelView channel_view(const Tensor<T>& x, const char* op) {
  if (x.ndim() != 2 && x.ndim() != 4)
    throw DimensionError(std::string(op) + ": expected a 2-D or 4-D tensor, got " + shape_str(x.shape()));
  std::int64_t inner = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), inner};
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

template <typename T, typename N>
std::shared_ptr<Node<T>> make_node(std::vector<Tensor<T>> inputs) {
  auto n = std::make_shared<N>();
  n->inputs = std::move(inputs);
  return n;
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
struct AddNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {g, g}; }
  const char* name() const override { return "add"; }
};

template <typename T>
struct SubNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {g, scale(g, T(-1))}; }
  const char* name() const override { return "sub"; }
};

template <typename T>
struct MulNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {mul(g, this->inputs[1]), mul(g, this->inputs[0])};
  }
  const char* name() const override { return "mul"; }
};

template <typename T>
struct ScaleNode : Node<T> {
  T factor{};
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {scale(g, factor)}; }
  const char* name() const override { return "scale"; }
};

template <typename T>
struct AddScalarNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {g}; }
  const char* name() const override { return "add_scalar"; }
};

template <typename T>
struct LeakyReluNode : Node<T> {
  T slope{};
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {leaky_relu_grad(g, this->inputs[0], slope)};
  }
  const char* name() const override { return "leaky_relu"; }
};

// Linear in g; the derivative with respect to x vanishes almost everywhere.
template <typename T>
struct LeakyReluGradNode : Node<T> {
  T slope{};
  std::vector<Tensor<T>> backward(const Tensor<T>& gg) override {
    return {leaky_relu_grad(gg, this->inputs[1], slope), Tensor<T>()};
  }
  const char* name() const override { return "leaky_relu_grad"; }
};

template <typename T>
struct TanhNode : Node<T> {
  Tensor<T> out;
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {map_binary(g, out, [](T gv, T y) { return gv * (T(1) - y * y); })};
  }
  bool twice_differentiable() const override { return false; }
  const char* name() const override { return "tanh"; }
};

template <typename T>
T stable_softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
struct SoftplusNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {map_binary(g, this->inputs[0], [](T gv, T x) { return gv * sigmoid(x); })};
  }
  bool twice_differentiable() const override { return false; }
  const char* name() const override { return "softplus"; }
};

constexpr double kRmsEps = 1e-8;

template <typename T>
struct RmsNormalizeNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    const Tensor<T>& x = this->inputs[0];
    std::int64_t cols = x.dim(-1);
    std::int64_t rows = x.numel() / std::max<std::int64_t>(cols, 1);
    Tensor<T> out(x.shape());
    auto xv = x.data();
    auto gv = g.data();
    auto ov = out.mutable_data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r * cols);
      double ss = 0, gx = 0;
      for (std::int64_t c = 0; c < cols; ++c) {
        ss += double(xv[base + c]) * xv[base + c];
        gx += double(gv[base + c]) * xv[base + c];
      }
      double rms = std::sqrt(ss / cols + kRmsEps);
      double k = gx / (cols * rms * rms * rms);
      for (std::int64_t c = 0; c < cols; ++c)
        ov[base + c] = static_cast<T>(gv[base + c] / rms - xv[base + c] * k);
    }
    return {out};
  }
  bool twice_differentiable() const override { return false; }
  const char* name() const override { return "rms_normalize"; }
};

// ---- reductions ------------------------------------------------------------

template <typename T>
struct SumNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {expand(g, this->inputs[0].shape())};
  }
  const char* name() const override { return "sum"; }
};

template <typename T>
struct ExpandNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {reshape(sum(g), this->inputs[0].shape())};
  }
  const char* name() const override { return "expand"; }
};

// ---- linear algebra and shape ----------------------------------------------

template <typename T>
struct MatmulNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {matmul(g, transpose(this->inputs[1])), matmul(transpose(this->inputs[0]), g)};
  }
  const char* name() const override { return "matmul"; }
};

template <typename T>
struct TransposeNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {transpose(g)}; }
  const char* name() const override { return "transpose"; }
};

template <typename T>
struct ReshapeNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {reshape(g, this->inputs[0].shape())};
  }
  const char* name() const override { return "reshape"; }
};

template <typename T>
struct ConcatNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    auto ca = this->inputs[0].dim(1);
    auto cb = this->inputs[1].dim(1);
    return {slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
  }
  const char* name() const override { return "concat_channels"; }
};

template <typename T>
struct SliceNode : Node<T> {
  std::int64_t start = 0;
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {pad_channels(g, start, this->inputs[0].dim(1))};
  }
  const char* name() const override { return "slice_channels"; }
};

template <typename T>
struct PadChannelsNode : Node<T> {
  std::int64_t start = 0;
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {slice_channels(g, start, this->inputs[0].dim(1))};
  }
  const char* name() const override { return "pad_channels"; }
};

template <typename T>
struct AddBiasNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {g, sum_except_channels(g)}; }
  const char* name() const override { return "add_bias"; }
};

template <typename T>
struct SumExceptChannelsNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {broadcast_channels(g, this->inputs[0].shape())};
  }
  const char* name() const override { return "sum_except_channels"; }
};

template <typename T>
struct BroadcastChannelsNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {sum_except_channels(g)}; }
  const char* name() const override { return "broadcast_channels"; }
};

template <typename T>
struct RepeatBatchNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override { return {sum_batch(g)}; }
  const char* name() const override { return "repeat_batch"; }
};

template <typename T>
struct SumBatchNode : Node<T> {
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    return {repeat_batch(g, this->inputs[0].dim(0))};
  }
  const char* name() const override { return "sum_batch"; }
};

template <typename T>
struct ResampleNode : Node<T> {
  Resample mode{};
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    if (mode == Resample::up_nearest_2x) return {scale(downsample2x(g), T(4))};
    return {scale(upsample2x(g), T(0.25))};
  }
  const char* name() const override { return "resample"; }
};

template <typename T>
struct Conv2dNode : Node<T> {
  int pad = 0;
  std::vector<Tensor<T>> backward(const Tensor<T>& g) override {
    const auto& x = this->inputs[0];
    const auto& w = this->inputs[1];
    Tensor<T> gx, gw;
    if (x.requires_grad()) gx = conv2d_input_grad(g, w, pad, x.shape());
    if (w.requires_grad()) gw = conv2d_weight_grad(x, g, pad, w.shape());
    return {gx, gw};
  }
  const char* name() const override { return "conv2d"; }
};

// y = A_w^T g, bilinear in (g, w): <gg, y> = <conv(gg, w), g>.
template <typename T>
struct ConvInputGradNode : Node<T> {
  int pad = 0;
  std::vector<Tensor<T>> backward(const Tensor<T>& gg) override {
    const auto& g = this->inputs[0];
    const auto& w = this->inputs[1];
    Tensor<T> dg, dw;
    if (g.requires_grad()) dg = conv2d(gg, w, pad);
    if (w.requires_grad()) dw = conv2d_weight_grad(gg, g, pad, w.shape());
    return {dg, dw};
  }
  const char* name() const override { return "conv2d_input_grad"; }
};

// y = dW(x, g), bilinear in (x, g): <gw, y> = <conv(x, gw), g>.
template <typename T>
struct ConvWeightGradNode : Node<T> {
  int pad = 0;
  std::vector<Tensor<T>> backward(const Tensor<T>& gw) override {
    const auto& x = this->inputs[0];
    const auto& g = this->inputs[1];
    Tensor<T> dx, dg;
    if (x.requires_grad()) dx = conv2d_input_grad(g, gw, pad, x.shape());
    if (g.requires_grad()) dg = conv2d(x, gw, pad);
    return {dx, dg};
  }
  const char* name() const override { return "conv2d_weight_grad"; }
};

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  return record(map_binary(a, b, [](T x, T y) { return x + y; }), make_node<T, AddNode<T>>({a, b}));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  return record(map_binary(a, b, [](T x, T y) { return x - y; }), make_node<T, SubNode<T>>({a, b}));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  return record(map_binary(a, b, [](T x, T y) { return x * y; }), make_node<T, MulNode<T>>({a, b}));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto node = std::make_shared<ScaleNode<T>>();
  node->inputs = {a};
  node->factor = factor;
  return record(map_unary(a, [factor](T x) { return x * factor; }), std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return record(map_unary(a, [value](T x) { return x + value; }), make_node<T, AddScalarNode<T>>({a}));
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  auto node = std::make_shared<LeakyReluNode<T>>();
  node->inputs = {x};
  node->slope = slope;
  return record(map_unary(x, [slope](T v) { return v >= T(0) ? v : slope * v; }),
                std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> leaky_relu_grad(const Tensor<T>& g, const Tensor<T>& x, T slope) {
  require_same_shape(g, x, "leaky_relu_grad");
  auto node = std::make_shared<LeakyReluGradNode<T>>();
  node->inputs = {g, x};
  node->slope = slope;
  return record(map_binary(g, x, [slope](T gv, T xv) { return xv >= T(0) ? gv : slope * gv; }),
                std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> out = map_unary(x, [](T v) { return std::tanh(v); });
  auto node = std::make_shared<TanhNode<T>>();
  node->inputs = {x};
  node->out = out.detach();
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return record(map_unary(x, [](T v) { return stable_softplus(v); }),
                make_node<T, SoftplusNode<T>>({x}));
}

template <typename T>
Tensor<T> rms_normalize(const Tensor<T>& x) {
  if (x.ndim() != 1 && x.ndim() != 2)
    throw DimensionError("rms_normalize expects a 1-D or 2-D tensor, got " + shape_str(x.shape()));
  std::int64_t cols = x.dim(-1);
  std::int64_t rows = cols ? x.numel() / cols : 0;
  Tensor<T> out(x.shape());
  auto xv = x.data();
  auto ov = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r * cols);
    double ss = 0;
    for (std::int64_t c = 0; c < cols; ++c) ss += double(xv[base + c]) * xv[base + c];
    double rms = std::sqrt(ss / cols + kRmsEps);
    for (std::int64_t c = 0; c < cols; ++c) ov[base + c] = static_cast<T>(xv[base + c] / rms);
  }
  return record(out, make_node<T, RmsNormalizeNode<T>>({x}));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return record(Tensor<T>::scalar(total), make_node<T, SumNode<T>>({x}));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> expand(const Tensor<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw DimensionError("expand expects a single-element tensor, got " + shape_str(s.shape()));
  return record(Tensor<T>(shape, s.data()[0]), make_node<T, ExpandNode<T>>({s}));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor<T> out({m, p});
  kernels::gemm<T>(a.ptr(), b.ptr(), out.mutable_ptr(), m, k, p, false, false, false);
  return record(out, make_node<T, MatmulNode<T>>({a, b}));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.ndim() != 2) throw DimensionError("transpose expects a 2-D tensor, got " + shape_str(a.shape()));
  const auto r = a.dim(0), c = a.dim(1);
  Tensor<T> out({c, r});
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) dst[static_cast<std::size_t>(j * r + i)] = src[static_cast<std::size_t>(i * c + j)];
  return record(out, make_node<T, TransposeNode<T>>({a}));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (numel_of(shape) != a.numel())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
  Tensor<T> out(shape, std::vector<T>(a.data().begin(), a.data().end()));
  return record(out, make_node<T, ReshapeNode<T>>({a}));
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  auto va = channel_view(a, "concat_channels");
  auto vb = channel_view(b, "concat_channels");
  Shape sa = a.shape(), sb = b.shape();
  sa[1] = sb[1] = 0;
  if (sa != sb)
    throw DimensionError("concat_channels: extents differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape shape = a.shape();
  shape[1] = va.channels + vb.channels;
  Tensor<T> out(shape);
  T* dst = out.mutable_ptr();
  const auto na = va.channels * va.inner, nb = vb.channels * vb.inner;
  for (std::int64_t i = 0; i < va.batch; ++i) {
    std::copy_n(a.ptr() + i * na, na, dst + i * (na + nb));
    std::copy_n(b.ptr() + i * nb, nb, dst + i * (na + nb) + na);
  }
  return record(out, make_node<T, ConcatNode<T>>({a, b}));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t start, std::int64_t count) {
  auto v = channel_view(x, "slice_channels");
  if (start < 0 || count < 0 || start + count > v.channels)
    throw DimensionError("slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + std::to_string(v.channels) + " channels");
  Shape shape = x.shape();
  shape[1] = count;
  Tensor<T> out(shape);
  for (std::int64_t i = 0; i < v.batch; ++i)
    std::copy_n(x.ptr() + (i * v.channels + start) * v.inner, count * v.inner,
                out.mutable_ptr() + i * count * v.inner);
  auto node = std::make_shared<SliceNode<T>>();
  node->inputs = {x};
  node->start = start;
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> pad_channels(const Tensor<T>& x, std::int64_t start, std::int64_t total) {
  auto v = channel_view(x, "pad_channels");
  if (start < 0 || start + v.channels > total)
    throw DimensionError("pad_channels: channels do not fit in the target");
  Shape shape = x.shape();
  shape[1] = total;
  Tensor<T> out(shape);
  for (std::int64_t i = 0; i < v.batch; ++i)
    std::copy_n(x.ptr() + i * v.channels * v.inner, v.channels * v.inner,
                out.mutable_ptr() + (i * total + start) * v.inner);
  auto node = std::make_shared<PadChannelsNode<T>>();
  node->inputs = {x};
  node->start = start;
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  auto v = channel_view(x, "add_bias");
  if (bias.ndim() != 1 || bias.dim(0) != v.channels)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  Tensor<T> out(x.shape());
  const T* src = x.ptr();
  T* dst = out.mutable_ptr();
  for (std::int64_t i = 0; i < v.batch; ++i)
    for (std::int64_t c = 0; c < v.channels; ++c) {
      const T b = bias.ptr()[c];
      const auto off = (i * v.channels + c) * v.inner;
      for (std::int64_t k = 0; k < v.inner; ++k) dst[off + k] = src[off + k] + b;
    }
  return record(out, make_node<T, AddBiasNode<T>>({x, bias}));
}

template <typename T>
Tensor<T> sum_except_channels(const Tensor<T>& x) {
  auto v = channel_view(x, "sum_except_channels");
  Tensor<T> out({v.channels});
  T* dst = out.mutable_ptr();
  for (std::int64_t i = 0; i < v.batch; ++i)
    for (std::int64_t c = 0; c < v.channels; ++c) {
      const T* src = x.ptr() + (i * v.channels + c) * v.inner;
      T acc = T(0);
      for (std::int64_t k = 0; k < v.inner; ++k) acc += src[k];
      dst[c] += acc;
    }
  return record(out, make_node<T, SumExceptChannelsNode<T>>({x}));
}

template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& vec, const Shape& shape) {
  Tensor<T> out(shape);
  auto v = channel_view(out, "broadcast_channels");
  if (vec.ndim() != 1 || vec.dim(0) != v.channels)
    throw DimensionError("broadcast_channels: vector " + shape_str(vec.shape()) + " does not match " + shape_str(shape));
  T* dst = out.mutable_ptr();
  for (std::int64_t i = 0; i < v.batch; ++i)
    for (std::int64_t c = 0; c < v.channels; ++c)
      std::fill_n(dst + (i * v.channels + c) * v.inner, v.inner, vec.ptr()[c]);
  return record(out, make_node<T, BroadcastChannelsNode<T>>({vec}));
}

template <typename T>
Tensor<T> repeat_batch(const Tensor<T>& x, std::int64_t batch) {
  if (x.ndim() < 1 || x.dim(0) != 1)
    throw DimensionError("repeat_batch expects a leading extent of 1, got " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[0] = batch;
  Tensor<T> out(shape);
  for (std::int64_t i = 0; i < batch; ++i) std::copy_n(x.ptr(), x.numel(), out.mutable_ptr() + i * x.numel());
  return record(out, make_node<T, RepeatBatchNode<T>>({x}));
}

template <typename T>
Tensor<T> sum_batch(const Tensor<T>& x) {
  if (x.ndim() < 1) throw DimensionError("sum_batch expects a batched tensor");
  Shape shape = x.shape();
  const auto batch = shape[0];
  shape[0] = 1;
  Tensor<T> out(shape);
  const auto per = out.numel();
  T* dst = out.mutable_ptr();
  for (std::int64_t i = 0; i < batch; ++i)
    for (std::int64_t k = 0; k < per; ++k) dst[k] += x.ptr()[i * per + k];
  return record(out, make_node<T, SumBatchNode<T>>({x}));
}

template <typename T>
Tensor<T> resample(const Tensor<T>& x, Resample mode) {
  if (x.ndim() != 4) throw DimensionError("resample expects b x c x H x W, got " + shape_str(x.shape()));
  const auto planes = x.dim(0) * x.dim(1);
  const auto H = x.dim(2), W = x.dim(3);
  Tensor<T> out;
  if (mode == Resample::up_nearest_2x) {
    out = Tensor<T>({x.dim(0), x.dim(1), 2 * H, 2 * W});
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = x.ptr() + p * H * W;
      T* dst = out.mutable_ptr() + p * 4 * H * W;
      for (std::int64_t y = 0; y < 2 * H; ++y)
        for (std::int64_t xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
    }
  } else {
    if (H % 2 || W % 2) throw DimensionError("down_avg_2x needs even extents, got " + shape_str(x.shape()));
    out = Tensor<T>({x.dim(0), x.dim(1), H / 2, W / 2});
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = x.ptr() + p * H * W;
      T* dst = out.mutable_ptr() + p * H * W / 4;
      for (std::int64_t y = 0; y < H / 2; ++y)
        for (std::int64_t xx = 0; xx < W / 2; ++xx) {
          const T* s = src + 2 * y * W + 2 * xx;
          dst[y * (W / 2) + xx] = (s[0] + s[1] + s[W] + s[W + 1]) * T(0.25);
        }
    }
  }
  auto node = std::make_shared<ResampleNode<T>>();
  node->inputs = {x};
  node->mode = mode;
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int pad) {
  auto geo = kernels::conv_geometry(x.shape(), w.shape(), pad);
  Tensor<T> out({geo.batch, geo.out_ch, geo.out_h, geo.out_w});
  kernels::conv_forward<T>(geo, x.ptr(), w.ptr(), out.mutable_ptr());
  auto node = std::make_shared<Conv2dNode<T>>();
  node->inputs = {x, w};
  node->pad = pad;
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, int pad, const Shape& x_shape) {
  auto geo = kernels::conv_geometry(x_shape, w.shape(), pad);
  if (g.shape() != Shape{geo.batch, geo.out_ch, geo.out_h, geo.out_w})
    throw DimensionError("conv2d_input_grad: gradient shape " + shape_str(g.shape()) + " inconsistent");
  Tensor<T> out(x_shape);
  kernels::conv_input_grad<T>(geo, g.ptr(), w.ptr(), out.mutable_ptr());
  auto node = std::make_shared<ConvInputGradNode<T>>();
  node->inputs = {g, w};
  node->pad = pad;
  return record(out, std::shared_ptr<Node<T>>(node));
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, int pad, const Shape& w_shape) {
  auto geo = kernels::conv_geometry(x.shape(), w_shape, pad);
  if (g.shape() != Shape{geo.batch, geo.out_ch, geo.out_h, geo.out_w})
    throw DimensionError("conv2d_weight_grad: gradient shape " + shape_str(g.shape()) + " inconsistent");
  Tensor<T> out(w_shape);
  kernels::conv_weight_grad<T>(geo, x.ptr(), g.ptr(), out.mutable_ptr());
  auto node = std::make_shared<ConvWeightGradNode<T>>();
  node->inputs = {x, g};
  node->pad = pad;
  return record(out, std::shared_ptr<Node<T>>(node));
}

#define STWO_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                            \
  template Tensor<T> leaky_relu_grad(const Tensor<T>&, const Tensor<T>&, T);                     \
  template Tensor<T> tanh(const Tensor<T>&);                                                     \
  template Tensor<T> softplus(const Tensor<T>&);                                                 \
  template Tensor<T> rms_normalize(const Tensor<T>&);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> expand(const Tensor<T>&, const Shape&);                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> transpose(const Tensor<T>&);                                                \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                    \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);               \
  template Tensor<T> pad_channels(const Tensor<T>&, std::int64_t, std::int64_t);                 \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sum_except_channels(const Tensor<T>&);                                      \
  template Tensor<T> broadcast_channels(const Tensor<T>&, const Shape&);                         \
  template Tensor<T> repeat_batch(const Tensor<T>&, std::int64_t);                               \
  template Tensor<T> sum_batch(const Tensor<T>&);                                                \
  template Tensor<T> resample(const Tensor<T>&, Resample);                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int);                            \
  template Tensor<T> conv2d_input_grad(const Tensor<T>&, const Tensor<T>&, int, const Shape&);   \
  template Tensor<T> conv2d_weight_grad(const Tensor<T>&, const Tensor<T>&, int, const Shape&);

STWO_INSTANTIATE_OPS(float)
STWO_INSTANTIATE_OPS(double)

}  // namespace stwo::ops
