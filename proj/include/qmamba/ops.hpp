#pragma once

#include <optional>
#include <span>

#include "qmamba/tensor.hpp"

namespace qmamba::ops {

// Convolutions use the cross-correlation convention (no kernel flip) and zero
// padding. Feature maps are channel-first [C, H, W].

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// out[o, y, x] = sum_{c, ky, kx} in[c, y*s - p + ky, x*s - p + kx] * k[o, c, ky, kx]
/// Kernel shape is [C_out, C_in, k, k] with k odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dParams params = {});

struct ConvTranspose2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  /// Extra rows/columns appended at the bottom/right of the output.
  std::size_t output_padding = 0;
};

/// Adjoint of conv2d: in[c, y, x] scatters into out[o, y*s - p + ky, x*s - p + kx]
/// with weight k[c, o, ky, kx]. Kernel shape is [C_in, C_out, k, k]; output size
/// is (H - 1)*s - 2p + k + output_padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, ConvTranspose2dParams params = {});

/// Affine map over the last dimension; leading dimensions are batch.
/// weight is [F_out, F_in], bias (optional) is [F_out].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias = nullptr);

/// linear() applied at every pixel of a [C, H, W] map.
Tensor pointwise_linear(const Tensor& input, const Tensor& weight, const Tensor* bias = nullptr);

/// [C, H, W] -> [C, 1, 1] channel means.
Tensor adaptive_avg_pool_1x1(const Tensor& input);

/// Depth-to-space: out[c, y*s + i, x*s + j] = in[c*s*s + i*s + j, y, x].
Tensor pixel_shuffle(const Tensor& input, std::size_t scale);
Tensor pixel_unshuffle(const Tensor& input, std::size_t scale);

enum class UnaryOp { kSoftplus, kSigmoid, kExp, kGelu, kRelu };
enum class BinaryOp { kAdd, kMul };

double softplus(double x);
double sigmoid(double x);
double gelu(double x);

Tensor elementwise(UnaryOp op, const Tensor& x);
/// Shapes must match, or `b` may be a single-element tensor broadcast over `a`.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Adds bias[c] to every pixel of channel c of a [C, H, W] map.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
/// Multiplies channel c of a [C, H, W] map by factors[c] (factors has C elements).
Tensor scale_channels(const Tensor& x, const Tensor& factors);

/// Concatenate [C_i, H, W] maps along the channel axis.
Tensor concat_channels(std::span<const Tensor> maps);

/// Per-pixel normalization across channels with affine gamma/beta ([C] each).
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

Tensor flip_horizontal(const Tensor& x);
Tensor flip_vertical(const Tensor& x);

}  // namespace qmamba::ops
