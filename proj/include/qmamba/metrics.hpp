#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmamba/tensor.hpp"

namespace qmamba::metrics {

/// 10 log10(max_val^2 / MSE); +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Rec.601 luma of a [3, H, W] image; [1, H, W] inputs pass through.
Tensor to_luma(const Tensor& image);

/// Mean local SSIM over all window positions fully inside the image, with a
/// normalized Gaussian window, on the luma of each input.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

/// PSNR (max 1) after mapping both gamma-domain inputs through max(x, 0)^2.2.
/// Provisional definition of the linear-domain PSNR.
double linear_psnr(const Tensor& a, const Tensor& b);

struct ImageScore {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> lpsnr_db;
};

struct Aggregate {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<ImageScore> per_image;
  Aggregate aggregate;
};

/// Fills `aggregate` with arithmetic means over per_image, in order.
EvalReport make_report(std::vector<ImageScore> scores);

/// JSON document; infinities are written as the string "inf".
std::string report_to_json(const EvalReport& report);
/// CSV with header "id,psnr_db,ssim,lpsnr_db".
std::string report_to_csv(const EvalReport& report);

/// "inf" for +infinity, otherwise shortest round-trip decimal.
std::string format_number(double v);

}  // namespace qmamba::metrics
