#include "qmamba/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace qmamba::metrics {

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  expect_shape(b, a.shape(), "psnr");
  if (!(max_val > 0.0)) throw Error(ErrorCode::kValidation, "psnr: max_val must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(max_val * max_val / mse);
}

Tensor to_luma(const Tensor& image) {
  expect_rank(image, 3, "luma input");
  if (image.dim(0) == 1) return image;
  if (image.dim(0) != 3)
    throw Error(ErrorCode::kShape, "luma needs 1 or 3 channels, got " + shape_str(image.shape()));
  const std::size_t hw = image.dim(1) * image.dim(2);
  Tensor y({1, image.dim(1), image.dim(2)});
  for (std::size_t p = 0; p < hw; ++p)
    y[p] = 0.299 * image[p] + 0.587 * image[hw + p] + 0.114 * image[2 * hw + p];
  return y;
}

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of a single plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * plane[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
  expect_shape(b, a.shape(), "ssim");
  const Tensor la = to_luma(a), lb = to_luma(b);
  const std::size_t h = la.dim(1), w = la.dim(2);
  if (h < opt.window || w < opt.window)
    throw Error(ErrorCode::kValidation, "ssim: image " + shape_str(a.shape()) + " smaller than the " +
                                            std::to_string(opt.window) + "x" + std::to_string(opt.window) + " window");
  const auto g = gaussian_window(opt.window, opt.sigma);
  const std::vector<double> pa(la.data().begin(), la.data().end()), pb(lb.data().begin(), lb.data().end());
  std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(pa, h, w, g), mu_b = filter_valid(pb, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);

  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma2 = mu_a[i] * mu_a[i], mb2 = mu_b[i] * mu_b[i], mab = mu_a[i] * mu_b[i];
    const double va = e_aa[i] - ma2, vb = e_bb[i] - mb2, cov = e_ab[i] - mab;
    total += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double linear_psnr(const Tensor& a, const Tensor& b) {
  expect_shape(b, a.shape(), "linear_psnr");
  Tensor la = a, lb = b;
  for (double& v : la.data()) v = std::pow(std::max(v, 0.0), 2.2);
  for (double& v : lb.data()) v = std::pow(std::max(v, 0.0), 2.2);
  return psnr(la, lb, 1.0);
}

EvalReport make_report(std::vector<ImageScore> scores) {
  EvalReport r;
  r.per_image = std::move(scores);
  r.aggregate.count = r.per_image.size();
  if (r.per_image.empty()) return r;
  double sp = 0.0, ss = 0.0;
  for (const auto& s : r.per_image) {
    sp += s.psnr_db;
    ss += s.ssim;
  }
  r.aggregate.mean_psnr = sp / static_cast<double>(r.per_image.size());
  r.aggregate.mean_ssim = ss / static_cast<double>(r.per_image.size());
  return r;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

nlohmann::json number_json(double v) {
  if (!std::isfinite(v)) return format_number(v);
  return v;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : report.per_image) {
    nlohmann::json row = {{"id", s.id}, {"psnr_db", number_json(s.psnr_db)}, {"ssim", number_json(s.ssim)}};
    if (s.lpsnr_db) row["lpsnr_db"] = number_json(*s.lpsnr_db);
    per.push_back(row);
  }
  nlohmann::json doc = {{"per_image", per},
                        {"aggregate",
                         {{"mean_psnr", number_json(report.aggregate.mean_psnr)},
                          {"mean_ssim", number_json(report.aggregate.mean_ssim)},
                          {"count", report.aggregate.count}}}};
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "id,psnr_db,ssim,lpsnr_db\n";
  for (const auto& s : report.per_image)
    os << s.id << ',' << format_number(s.psnr_db) << ',' << format_number(s.ssim) << ','
       << (s.lpsnr_db ? format_number(*s.lpsnr_db) : "") << '\n';
  return os.str();
}

}  // namespace qmamba::metrics
