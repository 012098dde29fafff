#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "qmamba/tensor.hpp"

namespace qmamba::synth {

/// raw4: RGGB Bayer packed to 4 channels at half resolution. rgb3: plain RGB frames.
enum class InputMode { kRaw4, kRgb3 };

std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view tag);
std::size_t input_channels(InputMode mode);
/// Spatial factor between the LR RGB grid and the frame grid (2 for raw4).
std::size_t packing_factor(InputMode mode);

/// Translation in frame-grid pixels. A frame with shift (dx, dy) samples the
/// scene at (x + dx, y + dy), so its content appears moved by (-dx, -dy).
struct Shift {
  double dx = 0.0;
  double dy = 0.0;
  bool operator==(const Shift&) const = default;
};

/// Heteroscedastic Gaussian noise: variance sigma_read^2 + sigma_shot^2 * x.
struct NoiseParams {
  double sigma_read = 0.0;
  double sigma_shot = 0.0;
};

struct BurstMeta {
  std::size_t scale = 4;
  NoiseParams noise;
  std::uint64_t seed = 0;
  InputMode input_mode = InputMode::kRaw4;
  double gamma = 2.2;
  double max_shift = 3.0;
};

/// Frame 0 is the base frame and always has shift (0, 0).
struct BurstStack {
  Tensor frames;  // [N, C, h, w]
  std::vector<Shift> shifts;
  BurstMeta meta;

  std::size_t num_frames() const { return frames.dim(0); }
  Tensor frame(std::size_t i) const { return frames.slice0(i); }
};

struct BurstOptions {
  std::size_t n_frames = 14;
  std::size_t scale = 4;
  NoiseParams noise;
  double max_shift = 3.0;
  std::uint64_t seed = 0;
  InputMode input_mode = InputMode::kRaw4;
  /// Exponent of the linearization x -> x^gamma; 1 disables it.
  double gamma = 2.2;
};

struct SyntheticBurst {
  BurstStack burst;
  Tensor gt;  // the HR input
};

/// Per frame i > 0: shift drawn uniformly in [-max_shift, max_shift]^2,
/// bilinear resample of `hr` at the shifted grid, area downsample by `scale`,
/// x^gamma, mosaic (raw4), additive noise, clip to [0, 1]. Frame i uses its
/// own generator seeded with derive_seed(seed, i).
SyntheticBurst generate_burst(const Tensor& hr, const BurstOptions& options);

/// Reference image at the network's output resolution: hr area-downsampled
/// by packing_factor(mode).
Tensor eval_target(const Tensor& hr, InputMode mode);

/// Bilinear resample at (x + dx, y + dy) with edge clamping.
Tensor shift_image(const Tensor& image, double dx, double dy);

/// Mean over non-overlapping factor x factor blocks.
Tensor area_downsample(const Tensor& image, std::size_t factor);

/// Applies x -> max(x, 0)^gamma elementwise.
Tensor apply_gamma(const Tensor& image, double gamma);

/// [3, 2h, 2w] RGB -> [4, h, w] with channels [R, G1, G2, B] taken from the
/// RGGB sites (0,0), (0,1), (1,0), (1,1) of each 2x2 cell.
Tensor mosaic(const Tensor& rgb);

/// Bilinear demosaic of a packed RGGB frame: sampled sites are copied and
/// missing sites are the weighted mean of the same-color samples in the 3x3
/// neighbourhood (cross kernel for green, 1-2-1 tensor kernel for red/blue).
Tensor demosaic_bilinear(const Tensor& packed);

/// Loads an 8- or 16-bit PNG as [C, H, W] in [0, 1] (C = 1, 3 or 4; palette
/// and gray+alpha images are expanded to RGB/RGBA).
Tensor load_image(const std::filesystem::path& path);
/// Writes [C, H, W] (C = 1, 3 or 4) clamped to [0, 1] and rounded to the
/// nearest code of the chosen bit depth (8 or 16).
void save_image(const Tensor& image, const std::filesystem::path& path, int bit_depth = 16);

}  // namespace qmamba::synth
