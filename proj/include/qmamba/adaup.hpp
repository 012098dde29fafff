#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "qmamba/layers.hpp"

namespace qmamba::adaup {

/// One x2 stage: base transposed-conv kernel and the 1x1 channel interaction.
struct StageWeights {
  Tensor kernel;   // [C_in, C_out, 3, 3]
  Tensor l1_proj;  // [C_out, C_in], no bias

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct AdaUpWeights {
  std::vector<StageWeights> stages;  // log2(scale) stages

  static AdaUpWeights init(std::size_t channels, std::size_t scale, Rng& rng);
  static AdaUpWeights zeros(std::size_t channels, std::size_t scale);

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Channel means of X, [C_in, 1, 1].
Tensor perceive_distribution(const Tensor& x);

/// L1 = l1_proj * L, [C_out, 1, 1].
Tensor channel_interact(const Tensor& l, const Tensor& l1_proj);

/// W_f[i, o, :, :] = W[i, o, :, :] * L[i] * L1[o].
Tensor modulate_kernel(const Tensor& kernel, const Tensor& l, const Tensor& l1);

/// Fixed descriptors replacing the live (L, L1) of a stage.
struct DescriptorOverride {
  Tensor l;   // [C_in, 1, 1]
  Tensor l1;  // [C_out, 1, 1]
};

/// Transposed conv with stride 2, padding 1, output_padding 1: an H x W input
/// becomes exactly 2H x 2W. Output pixel (y, x) collects input (i, j) through
/// tap (ky, kx) whenever y = 2i - 1 + ky and x = 2j - 1 + kx.
Tensor upsample_x2(const Tensor& x, const Tensor& kernel);

Tensor adaup_stage(const Tensor& x, const StageWeights& w, const std::optional<DescriptorOverride>& fixed = {});

/// Cascade of log2(scale) stages; each stage perceives (L, L1) from its own
/// input. `fixed`, when given, supplies one override per stage.
Tensor adaup_forward(const Tensor& x, const AdaUpWeights& w, std::size_t scale,
                     const std::vector<DescriptorOverride>* fixed = nullptr);

/// log2(scale); throws unless scale is a power of two >= 2.
std::size_t stage_count(std::size_t scale);

enum class BaselineMode { kPixelShuffleConv, kBilinear, kBicubic };
BaselineMode parse_baseline_mode(std::string_view tag);

/// Separable bilinear resize with half-pixel centers (align_corners = false):
/// source coordinate (dst + 0.5) / factor - 0.5, clamped to the border.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// Keys cubic (a = -0.75) with the same coordinate mapping and edge replication.
Tensor bicubic_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Static comparators. kPixelShuffleConv needs `conv_kernel` of shape
/// [C*s*s, C, k, k] (stride 1, same padding) followed by pixel_shuffle(s).
Tensor baseline_upsample(const Tensor& x, BaselineMode mode, std::size_t scale, const Tensor* conv_kernel = nullptr);

}  // namespace qmamba::adaup
