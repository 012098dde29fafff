#include "qmamba/synthburst.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qmamba/random.hpp"

namespace qmamba::synth {

std::string_view to_string(InputMode mode) { return mode == InputMode::kRaw4 ? "raw4" : "rgb3"; }

InputMode parse_input_mode(std::string_view tag) {
  if (tag == "raw4") return InputMode::kRaw4;
  if (tag == "rgb3") return InputMode::kRgb3;
  throw Error(ErrorCode::kValidation, "unknown input mode '" + std::string(tag) + "'");
}

std::size_t input_channels(InputMode mode) { return mode == InputMode::kRaw4 ? 4 : 3; }
std::size_t packing_factor(InputMode mode) { return mode == InputMode::kRaw4 ? 2 : 1; }

Tensor shift_image(const Tensor& image, double dx, double dy) {
  expect_rank(image, 3, "shift_image input");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  auto axis_taps = [](double pos, std::size_t n, std::size_t& i0, std::size_t& i1, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    const double fl = std::floor(pos);
    i0 = static_cast<std::size_t>(fl);
    i1 = std::min(i0 + 1, n - 1);
    frac = pos - fl;
  };
  for (std::size_t y = 0; y < h; ++y) {
    std::size_t y0, y1;
    double fy;
    axis_taps(static_cast<double>(y) + dy, h, y0, y1, fy);
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t x0, x1;
      double fx;
      axis_taps(static_cast<double>(x) + dx, w, x0, x1, fx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = image.data().data() + ch * h * w;
        const double top = fx == 0.0 ? p[y0 * w + x0] : (1.0 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1];
        const double bot = fx == 0.0 ? p[y1 * w + x0] : (1.0 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1];
        out[(ch * h + y) * w + x] = fy == 0.0 ? top : (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Tensor area_downsample(const Tensor& image, std::size_t factor) {
  expect_rank(image, 3, "area_downsample input");
  if (factor == 0 || image.dim(1) % factor != 0 || image.dim(2) % factor != 0)
    throw Error(ErrorCode::kValidation, "area_downsample: " + shape_str(image.shape()) + " not divisible by " +
                                            std::to_string(factor));
  if (factor == 1) return image;
  const std::size_t c = image.dim(0), h = image.dim(1) / factor, w = image.dim(2) / factor;
  const std::size_t src_w = image.dim(2);
  Tensor out({c, h, w});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t i = 0; i < factor; ++i)
          for (std::size_t j = 0; j < factor; ++j) s += image[(ch * image.dim(1) + y * factor + i) * src_w + x * factor + j];
        out[(ch * h + y) * w + x] = s * inv;
      }
  return out;
}

Tensor apply_gamma(const Tensor& image, double gamma) {
  Tensor out = image;
  if (gamma == 1.0) return out;
  for (double& v : out.data()) v = std::pow(std::max(v, 0.0), gamma);
  return out;
}

Tensor mosaic(const Tensor& rgb) {
  expect_rank(rgb, 3, "mosaic input");
  if (rgb.dim(0) != 3) throw Error(ErrorCode::kShape, "mosaic expects 3 channels, got " + shape_str(rgb.shape()));
  if (rgb.dim(1) % 2 != 0 || rgb.dim(2) % 2 != 0)
    throw Error(ErrorCode::kShape, "mosaic needs even spatial dims, got " + shape_str(rgb.shape()));
  const std::size_t h = rgb.dim(1) / 2, w = rgb.dim(2) / 2, full_h = rgb.dim(1), full_w = rgb.dim(2);
  Tensor packed({4, h, w});
  // (color channel, row offset, col offset) for R, G1, G2, B.
  constexpr std::size_t sites[4][3] = {{0, 0, 0}, {1, 0, 1}, {1, 1, 0}, {2, 1, 1}};
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        packed[(k * h + y) * w + x] =
            rgb[(sites[k][0] * full_h + 2 * y + sites[k][1]) * full_w + 2 * x + sites[k][2]];
  return packed;
}

Tensor demosaic_bilinear(const Tensor& packed) {
  expect_rank(packed, 3, "demosaic input");
  if (packed.dim(0) != 4) throw Error(ErrorCode::kShape, "demosaic expects 4 channels, got " + shape_str(packed.shape()));
  const std::size_t h = packed.dim(1), w = packed.dim(2), full_h = 2 * h, full_w = 2 * w;

  // Color of each mosaic site: 0 = R, 1 = G, 2 = B.
  auto color_at = [](std::size_t y, std::size_t x) -> std::size_t {
    if (y % 2 == 0) return x % 2 == 0 ? 0 : 1;
    return x % 2 == 0 ? 1 : 2;
  };
  auto raw_at = [&](std::size_t y, std::size_t x) {
    const std::size_t k = (y % 2) * 2 + (x % 2);
    return packed[(k * h + y / 2) * w + x / 2];
  };
  constexpr double kGreen[3][3] = {{0, 1, 0}, {1, 4, 1}, {0, 1, 0}};
  constexpr double kRedBlue[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};

  Tensor rgb({3, full_h, full_w});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const auto& kernel = ch == 1 ? kGreen : kRedBlue;
    for (std::size_t y = 0; y < full_h; ++y)
      for (std::size_t x = 0; x < full_w; ++x) {
        double& dst = rgb[(ch * full_h + y) * full_w + x];
        if (color_at(y, x) == ch) {
          dst = raw_at(y, x);
          continue;
        }
        double num = 0.0, den = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(full_h) || xx >= static_cast<std::ptrdiff_t>(full_w))
              continue;
            if (color_at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) != ch) continue;
            const double wgt = kernel[dy + 1][dx + 1];
            num += wgt * raw_at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            den += wgt;
          }
        dst = den > 0.0 ? num / den : 0.0;
      }
  }
  return rgb;
}

SyntheticBurst generate_burst(const Tensor& hr, const BurstOptions& opt) {
  expect_rank(hr, 3, "hr image");
  if (hr.dim(0) != 3) throw Error(ErrorCode::kShape, "hr image must have 3 channels, got " + shape_str(hr.shape()));
  if (opt.n_frames < 2) throw Error(ErrorCode::kValidation, "burst needs at least 2 frames");
  if (opt.scale == 0) throw Error(ErrorCode::kValidation, "scale must be >= 1");
  if (opt.noise.sigma_read < 0.0 || opt.noise.sigma_shot < 0.0)
    throw Error(ErrorCode::kValidation, "noise parameters must be non-negative");
  if (opt.max_shift < 0.0) throw Error(ErrorCode::kValidation, "max_shift must be non-negative");
  const std::size_t block = opt.scale * packing_factor(opt.input_mode);
  if (hr.dim(1) % block != 0 || hr.dim(2) % block != 0)
    throw Error(ErrorCode::kValidation, "hr size " + shape_str(hr.shape()) + " not divisible by " +
                                            std::to_string(block) + " (scale x packing)");

  std::vector<Tensor> frames;
  std::vector<Shift> shifts;
  for (std::size_t i = 0; i < opt.n_frames; ++i) {
    Rng rng(derive_seed(opt.seed, i));
    Shift s;
    if (i > 0) {
      s.dx = rng.uniform(-opt.max_shift, opt.max_shift);
      s.dy = rng.uniform(-opt.max_shift, opt.max_shift);
    }
    const double hr_per_frame_px = static_cast<double>(block);
    Tensor img = (s.dx == 0.0 && s.dy == 0.0) ? hr : shift_image(hr, s.dx * hr_per_frame_px, s.dy * hr_per_frame_px);
    img = apply_gamma(area_downsample(img, opt.scale), opt.gamma);
    if (opt.input_mode == InputMode::kRaw4) img = mosaic(img);
    if (opt.noise.sigma_read > 0.0 || opt.noise.sigma_shot > 0.0) {
      for (double& v : img.data()) {
        const double var = opt.noise.sigma_read * opt.noise.sigma_read +
                           opt.noise.sigma_shot * opt.noise.sigma_shot * std::max(v, 0.0);
        v += std::sqrt(var) * rng.normal();
      }
    }
    for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
    frames.push_back(std::move(img));
    shifts.push_back(s);
  }

  SyntheticBurst out;
  out.burst.frames = stack(frames);
  out.burst.shifts = std::move(shifts);
  out.burst.meta = BurstMeta{opt.scale, opt.noise, opt.seed, opt.input_mode, opt.gamma, opt.max_shift};
  out.gt = hr;
  return out;
}

Tensor eval_target(const Tensor& hr, InputMode mode) { return area_downsample(hr, packing_factor(mode)); }

}  // namespace qmamba::synth
