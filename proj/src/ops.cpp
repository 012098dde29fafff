#include "qmamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qmamba::ops {

namespace {

void check_odd_kernel(const Tensor& kernel, std::string_view what) {
  expect_rank(kernel, 4, what);
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0)
    throw Error(ErrorCode::kShape, std::string(what) + ": kernel must be square with odd size, got " +
                                       shape_str(kernel.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dParams params) {
  expect_rank(input, 3, "conv2d input");
  check_odd_kernel(kernel, "conv2d");
  if (params.stride == 0) throw Error(ErrorCode::kValidation, "conv2d: stride must be >= 1");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != c_in)
    throw Error(ErrorCode::kShape, "conv2d: input " + shape_str(input.shape()) + " has " + std::to_string(c_in) +
                                       " channels but kernel " + shape_str(kernel.shape()) + " expects " +
                                       std::to_string(kernel.dim(1)));
  const auto pad = static_cast<std::ptrdiff_t>(params.padding);
  const auto stride = static_cast<std::ptrdiff_t>(params.stride);
  if (h + 2 * params.padding < k || w + 2 * params.padding < k)
    throw Error(ErrorCode::kShape, "conv2d: kernel larger than padded input " + shape_str(input.shape()));
  const std::size_t h_out = (h + 2 * params.padding - k) / params.stride + 1;
  const std::size_t w_out = (w + 2 * params.padding - k) / params.stride + 1;

  Tensor out({c_out, h_out, w_out});
  auto dst = out.data();
  auto src = input.data();
  auto ker = kernel.data();
  for (std::size_t o = 0; o < c_out; ++o) {
    double* out_plane = dst.data() + o * h_out * w_out;
    for (std::size_t c = 0; c < c_in; ++c) {
      const double* in_plane = src.data() + c * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = ker[((o * c_in + c) * k + ky) * k + kx];
          if (wv == 0.0) continue;
          for (std::size_t y = 0; y < h_out; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * stride - pad + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* in_row = in_plane + iy * static_cast<std::ptrdiff_t>(w);
            double* out_row = out_plane + y * w_out;
            for (std::size_t x = 0; x < w_out; ++x) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(x) * stride - pad + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              out_row[x] += wv * in_row[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, ConvTranspose2dParams params) {
  expect_rank(input, 3, "conv_transpose2d input");
  check_odd_kernel(kernel, "conv_transpose2d");
  if (params.stride == 0) throw Error(ErrorCode::kValidation, "conv_transpose2d: stride must be >= 1");
  if (params.output_padding >= params.stride && params.output_padding > 0)
    throw Error(ErrorCode::kValidation, "conv_transpose2d: output_padding must be smaller than stride");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernel.dim(1), k = kernel.dim(2);
  if (kernel.dim(0) != c_in)
    throw Error(ErrorCode::kShape, "conv_transpose2d: input " + shape_str(input.shape()) + " has " +
                                       std::to_string(c_in) + " channels but kernel " + shape_str(kernel.shape()) +
                                       " expects " + std::to_string(kernel.dim(0)));
  const std::size_t full_h = (h - 1) * params.stride + k + params.output_padding;
  const std::size_t full_w = (w - 1) * params.stride + k + params.output_padding;
  if (full_h <= 2 * params.padding || full_w <= 2 * params.padding)
    throw Error(ErrorCode::kShape, "conv_transpose2d: padding removes the whole output");
  const std::size_t h_out = full_h - 2 * params.padding;
  const std::size_t w_out = full_w - 2 * params.padding;
  const auto pad = static_cast<std::ptrdiff_t>(params.padding);
  const auto stride = static_cast<std::ptrdiff_t>(params.stride);

  Tensor out({c_out, h_out, w_out});
  auto dst = out.data();
  auto src = input.data();
  auto ker = kernel.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    const double* in_plane = src.data() + c * h * w;
    for (std::size_t o = 0; o < c_out; ++o) {
      double* out_plane = dst.data() + o * h_out * w_out;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = ker[((c * c_out + o) * k + ky) * k + kx];
          if (wv == 0.0) continue;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(y) * stride - pad + static_cast<std::ptrdiff_t>(ky);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(h_out)) continue;
            double* out_row = out_plane + oy * static_cast<std::ptrdiff_t>(w_out);
            const double* in_row = in_plane + y * w;
            for (std::size_t x = 0; x < w; ++x) {
              const std::ptrdiff_t ox =
                  static_cast<std::ptrdiff_t>(x) * stride - pad + static_cast<std::ptrdiff_t>(kx);
              if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(w_out)) continue;
              out_row[ox] += wv * in_row[x];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  expect_rank(weight, 2, "linear weight");
  const std::size_t f_out = weight.dim(0), f_in = weight.dim(1);
  if (input.shape().back() != f_in)
    throw Error(ErrorCode::kShape, "linear: input " + shape_str(input.shape()) + " last dim does not match weight " +
                                       shape_str(weight.shape()));
  if (bias) expect_shape(*bias, {f_out}, "linear bias");
  Shape out_shape = input.shape();
  out_shape.back() = f_out;
  Tensor out(out_shape);
  const std::size_t rows = input.size() / f_in;
  auto src = input.data();
  auto wt = weight.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = src.data() + r * f_in;
    double* y = dst.data() + r * f_out;
    for (std::size_t o = 0; o < f_out; ++o) {
      const double* wrow = wt.data() + o * f_in;
      double acc = 0.0;
      for (std::size_t i = 0; i < f_in; ++i) acc += wrow[i] * x[i];
      y[o] = bias ? acc + (*bias)[o] : acc;
    }
  }
  return out;
}

Tensor pointwise_linear(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  expect_rank(input, 3, "pointwise_linear input");
  expect_rank(weight, 2, "pointwise_linear weight");
  const std::size_t c_in = input.dim(0), hw = input.dim(1) * input.dim(2);
  const std::size_t c_out = weight.dim(0);
  if (weight.dim(1) != c_in)
    throw Error(ErrorCode::kShape, "pointwise_linear: input " + shape_str(input.shape()) +
                                       " does not match weight " + shape_str(weight.shape()));
  if (bias) expect_shape(*bias, {c_out}, "pointwise_linear bias");
  Tensor out({c_out, input.dim(1), input.dim(2)});
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < c_out; ++o) {
    double* y = dst.data() + o * hw;
    for (std::size_t c = 0; c < c_in; ++c) {
      const double wv = weight[o * c_in + c];
      const double* x = src.data() + c * hw;
      for (std::size_t p = 0; p < hw; ++p) y[p] += wv * x[p];
    }
    if (bias)
      for (std::size_t p = 0; p < hw; ++p) y[p] += (*bias)[o];
  }
  return out;
}

Tensor adaptive_avg_pool_1x1(const Tensor& input) {
  expect_rank(input, 3, "adaptive_avg_pool_1x1 input");
  const std::size_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  Tensor out({c, 1, 1});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += input[ch * hw + p];
    out[ch] = s / static_cast<double>(hw);
  }
  return out;
}

Tensor pixel_shuffle(const Tensor& input, std::size_t scale) {
  expect_rank(input, 3, "pixel_shuffle input");
  if (scale == 0) throw Error(ErrorCode::kValidation, "pixel_shuffle: scale must be >= 1");
  const std::size_t s2 = scale * scale;
  if (input.dim(0) % s2 != 0)
    throw Error(ErrorCode::kShape, "pixel_shuffle: " + std::to_string(input.dim(0)) +
                                       " channels not divisible by scale^2 = " + std::to_string(s2));
  const std::size_t c = input.dim(0) / s2, h = input.dim(1), w = input.dim(2);
  Tensor out({c, h * scale, w * scale});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < scale; ++i)
      for (std::size_t j = 0; j < scale; ++j)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            out[(ch * h * scale + y * scale + i) * w * scale + x * scale + j] =
                input[((ch * s2 + i * scale + j) * h + y) * w + x];
  return out;
}

Tensor pixel_unshuffle(const Tensor& input, std::size_t scale) {
  expect_rank(input, 3, "pixel_unshuffle input");
  if (scale == 0) throw Error(ErrorCode::kValidation, "pixel_unshuffle: scale must be >= 1");
  if (input.dim(1) % scale != 0 || input.dim(2) % scale != 0)
    throw Error(ErrorCode::kShape, "pixel_unshuffle: spatial dims of " + shape_str(input.shape()) +
                                       " not divisible by " + std::to_string(scale));
  const std::size_t s2 = scale * scale;
  const std::size_t c = input.dim(0), h = input.dim(1) / scale, w = input.dim(2) / scale;
  Tensor out({c * s2, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < scale; ++i)
      for (std::size_t j = 0; j < scale; ++j)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            out[((ch * s2 + i * scale + j) * h + y) * w + x] =
                input[(ch * h * scale + y * scale + i) * w * scale + x * scale + j];
  return out;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor elementwise(UnaryOp op, const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) {
    switch (op) {
      case UnaryOp::kSoftplus: v = softplus(v); break;
      case UnaryOp::kSigmoid: v = sigmoid(v); break;
      case UnaryOp::kExp: v = std::exp(v); break;
      case UnaryOp::kGelu: v = gelu(v); break;
      case UnaryOp::kRelu: v = std::max(v, 0.0); break;
    }
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool broadcast = b.size() == 1 && a.shape() != b.shape();
  if (!broadcast) expect_shape(b, a.shape(), "elementwise rhs");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double rhs = broadcast ? b[0] : b[i];
    out[i] = op == BinaryOp::kAdd ? out[i] + rhs : out[i] * rhs;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kAdd, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kMul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  Tensor out = x;
  for (double& v : out.data()) v *= factor;
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  expect_rank(x, 3, "add_channel_bias input");
  expect_shape(bias, {x.dim(0)}, "add_channel_bias bias");
  Tensor out = x;
  const std::size_t hw = x.dim(1) * x.dim(2);
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] += bias[c];
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& factors) {
  expect_rank(x, 3, "scale_channels input");
  if (factors.size() != x.dim(0))
    throw Error(ErrorCode::kShape, "scale_channels: " + std::to_string(factors.size()) + " factors for " +
                                       shape_str(x.shape()));
  Tensor out = x;
  const std::size_t hw = x.dim(1) * x.dim(2);
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] *= factors[c];
  return out;
}

Tensor concat_channels(std::span<const Tensor> maps) {
  if (maps.empty()) throw Error(ErrorCode::kShape, "concat_channels of zero maps");
  expect_rank(maps[0], 3, "concat_channels");
  const std::size_t h = maps[0].dim(1), w = maps[0].dim(2);
  std::size_t channels = 0;
  std::vector<double> data;
  for (const auto& m : maps) {
    expect_rank(m, 3, "concat_channels");
    if (m.dim(1) != h || m.dim(2) != w)
      throw Error(ErrorCode::kShape, "concat_channels: spatial mismatch " + shape_str(m.shape()) + " vs " +
                                         shape_str(maps[0].shape()));
    channels += m.dim(0);
    data.insert(data.end(), m.values().begin(), m.values().end());
  }
  return Tensor({channels, h, w}, std::move(data));
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  expect_rank(x, 3, "layer_norm_channels input");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  expect_shape(gamma, {c}, "layer_norm gamma");
  expect_shape(beta, {c}, "layer_norm beta");
  Tensor out(x.shape());
  for (std::size_t p = 0; p < hw; ++p) {
    double mean = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) mean += x[ch * hw + p];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[ch * hw + p] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + p] = (x[ch * hw + p] - mean) * inv * gamma[ch] + beta[ch];
  }
  return out;
}

Tensor flip_horizontal(const Tensor& x) {
  expect_rank(x, 3, "flip_horizontal");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) out[(ch * h + y) * w + i] = x[(ch * h + y) * w + (w - 1 - i)];
  return out;
}

Tensor flip_vertical(const Tensor& x) {
  expect_rank(x, 3, "flip_vertical");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) out[(ch * h + y) * w + i] = x[(ch * h + (h - 1 - y)) * w + i];
  return out;
}

}  // namespace qmamba::ops
