#include "qmamba/adaup.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qmamba/ops.hpp"

namespace qmamba::adaup {

void StageWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "weight", kernel);
  fn(prefix + "l1_proj.weight", l1_proj);
}

void AdaUpWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t i = 0; i < stages.size(); ++i) stages[i].visit(prefix + std::to_string(i) + ".", fn);
}

std::size_t stage_count(std::size_t scale) {
  if (scale < 2 || (scale & (scale - 1)) != 0)
    throw Error(ErrorCode::kValidation, "adaup: scale " + std::to_string(scale) + " is not a power of 2");
  std::size_t n = 0;
  while ((std::size_t{1} << n) < scale) ++n;
  return n;
}

AdaUpWeights AdaUpWeights::init(std::size_t channels, std::size_t scale, Rng& rng) {
  AdaUpWeights w;
  const double kb = 1.0 / std::sqrt(static_cast<double>(channels * 9));
  const double pb = 1.0 / std::sqrt(static_cast<double>(channels));
  for (std::size_t s = 0; s < stage_count(scale); ++s) {
    // Kernel scaled by 4 so a stride-2 transposed conv keeps roughly unit gain
    // (each output pixel receives ~9/4 taps).
    w.stages.push_back(StageWeights{rng.uniform_tensor({channels, channels, 3, 3}, -4.0 * kb, 4.0 * kb),
                                    rng.uniform_tensor({channels, channels}, -pb, pb)});
  }
  return w;
}

AdaUpWeights AdaUpWeights::zeros(std::size_t channels, std::size_t scale) {
  AdaUpWeights w;
  for (std::size_t s = 0; s < stage_count(scale); ++s)
    w.stages.push_back(StageWeights{Tensor({channels, channels, 3, 3}), Tensor({channels, channels})});
  return w;
}

Tensor perceive_distribution(const Tensor& x) { return ops::adaptive_avg_pool_1x1(x); }

Tensor channel_interact(const Tensor& l, const Tensor& l1_proj) {
  expect_rank(l, 3, "channel_interact L");
  expect_rank(l1_proj, 2, "l1_proj");
  if (l.dim(1) != 1 || l.dim(2) != 1 || l.dim(0) != l1_proj.dim(1))
    throw Error(ErrorCode::kShape, "channel_interact: L " + shape_str(l.shape()) + " does not match l1_proj " +
                                       shape_str(l1_proj.shape()));
  return ops::linear(l.reshaped({l.dim(0)}), l1_proj).reshaped({l1_proj.dim(0), 1, 1});
}

Tensor modulate_kernel(const Tensor& kernel, const Tensor& l, const Tensor& l1) {
  expect_rank(kernel, 4, "adaup kernel");
  const std::size_t c_in = kernel.dim(0), c_out = kernel.dim(1), taps = kernel.dim(2) * kernel.dim(3);
  expect_shape(l, {c_in, 1, 1}, "L");
  expect_shape(l1, {c_out, 1, 1}, "L1");
  Tensor wf = kernel;
  for (std::size_t i = 0; i < c_in; ++i)
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t t = 0; t < taps; ++t) wf[(i * c_out + o) * taps + t] = kernel[(i * c_out + o) * taps + t] * l[i] * l1[o];
  return wf;
}

Tensor upsample_x2(const Tensor& x, const Tensor& kernel) {
  expect_rank(kernel, 4, "adaup kernel");
  if (kernel.dim(2) != 3 || kernel.dim(3) != 3)
    throw Error(ErrorCode::kShape, "adaup kernel must be 3x3, got " + shape_str(kernel.shape()));
  return ops::conv_transpose2d(x, kernel, ops::ConvTranspose2dParams{.stride = 2, .padding = 1, .output_padding = 1});
}

Tensor adaup_stage(const Tensor& x, const StageWeights& w, const std::optional<DescriptorOverride>& fixed) {
  expect_rank(x, 3, "adaup input");
  Tensor l, l1;
  if (fixed) {
    l = fixed->l;
    l1 = fixed->l1;
  } else {
    l = perceive_distribution(x);
    l1 = channel_interact(l, w.l1_proj);
  }
  return upsample_x2(x, modulate_kernel(w.kernel, l, l1));
}

Tensor adaup_forward(const Tensor& x, const AdaUpWeights& w, std::size_t scale,
                     const std::vector<DescriptorOverride>* fixed) {
  const std::size_t n = stage_count(scale);
  if (w.stages.size() != n)
    throw Error(ErrorCode::kShape, "adaup: scale " + std::to_string(scale) + " needs " + std::to_string(n) +
                                       " stages, weights hold " + std::to_string(w.stages.size()));
  if (fixed && fixed->size() != n)
    throw Error(ErrorCode::kShape, "adaup: expected " + std::to_string(n) + " descriptor overrides");
  Tensor y = x;
  for (std::size_t s = 0; s < n; ++s)
    y = adaup_stage(y, w.stages[s], fixed ? std::optional<DescriptorOverride>((*fixed)[s]) : std::nullopt);
  return y;
}

BaselineMode parse_baseline_mode(std::string_view tag) {
  if (tag == "pixel_shuffle_conv") return BaselineMode::kPixelShuffleConv;
  if (tag == "bilinear") return BaselineMode::kBilinear;
  if (tag == "bicubic") return BaselineMode::kBicubic;
  throw Error(ErrorCode::kValidation, "unknown upsampling mode '" + std::string(tag) + "'");
}

namespace {

struct Taps {
  std::size_t idx[4];
  double weight[4];
  std::size_t count;
};

Taps linear_taps(std::size_t dst, std::size_t in, std::size_t out) {
  double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  if (src < 0.0) src = 0.0;
  const auto i0 = static_cast<std::size_t>(std::floor(src));
  const std::size_t i1 = std::min(i0 + 1, in - 1);
  const double frac = src - static_cast<double>(i0);
  return Taps{{i0, i1, 0, 0}, {1.0 - frac, frac, 0.0, 0.0}, 2};
}

double cubic_weight(double t) {
  constexpr double a = -0.75;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

Taps cubic_taps(std::size_t dst, std::size_t in, std::size_t out) {
  const double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  const double base = std::floor(src);
  const double t = src - base;
  Taps taps{};
  taps.count = 4;
  for (int k = 0; k < 4; ++k) {
    const auto pos = static_cast<std::ptrdiff_t>(base) + k - 1;
    taps.idx[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(pos, 0, static_cast<std::ptrdiff_t>(in) - 1));
    taps.weight[k] = cubic_weight(t - static_cast<double>(k - 1));
  }
  return taps;
}

template <typename TapFn>
Tensor separable_resize(const Tensor& x, std::size_t out_h, std::size_t out_w, TapFn taps_for) {
  expect_rank(x, 3, "resize input");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor tmp({c, h, out_w});
  for (std::size_t ox = 0; ox < out_w; ++ox) {
    const Taps t = taps_for(ox, w, out_w);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.count; ++k) acc += t.weight[k] * x[(ch * h + y) * w + t.idx[k]];
        tmp[(ch * h + y) * out_w + ox] = acc;
      }
  }
  Tensor out({c, out_h, out_w});
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Taps t = taps_for(oy, h, out_h);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.count; ++k) acc += t.weight[k] * tmp[(ch * h + t.idx[k]) * out_w + ox];
        out[(ch * out_h + oy) * out_w + ox] = acc;
      }
  }
  return out;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  return separable_resize(x, out_h, out_w, linear_taps);
}

Tensor bicubic_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  return separable_resize(x, out_h, out_w, cubic_taps);
}

Tensor baseline_upsample(const Tensor& x, BaselineMode mode, std::size_t scale, const Tensor* conv_kernel) {
  expect_rank(x, 3, "baseline_upsample input");
  if (scale == 0) throw Error(ErrorCode::kValidation, "baseline_upsample: scale must be >= 1");
  switch (mode) {
    case BaselineMode::kBilinear: return bilinear_resize(x, x.dim(1) * scale, x.dim(2) * scale);
    case BaselineMode::kBicubic: return bicubic_resize(x, x.dim(1) * scale, x.dim(2) * scale);
    case BaselineMode::kPixelShuffleConv: {
      if (!conv_kernel) throw Error(ErrorCode::kValidation, "pixel_shuffle_conv needs a conv kernel");
      const std::size_t pad = conv_kernel->rank() == 4 ? conv_kernel->dim(2) / 2 : 0;
      const Tensor expanded = ops::conv2d(x, *conv_kernel, ops::Conv2dParams{.stride = 1, .padding = pad});
      return ops::pixel_shuffle(expanded, scale);
    }
  }
  throw Error(ErrorCode::kValidation, "baseline_upsample: unknown mode");
}

}  // namespace qmamba::adaup
