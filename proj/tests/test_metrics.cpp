#include <cmath>
#include <limits>

#include "golden.hpp"
#include "helpers.hpp"
#include "qmamba/metrics.hpp"
#include "qmamba/weights_io.hpp"
#include "ssim_oracle.hpp"

using namespace qmamba;
using namespace qmamba::metrics;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor plus(const Tensor& a, double c) {
  Tensor b = a;
  for (double& v : b.data()) v += c;
  return b;
}

double mse_loop(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr closed forms") {
    Rng rng(1);
    const Tensor a = rng.uniform_tensor({3, 8, 8}, 0.0, 0.4);
    CHECK(std::abs(psnr(a, plus(a, 0.5)) - 20.0 * std::log10(2.0)) <= 1e-6);
    CHECK(std::abs(psnr(a, plus(a, 0.5)) - 6.0206) <= 1e-4);
    CHECK(std::abs(psnr(a, plus(a, 1.0 / 255.0)) - 48.1308) <= 1e-4);
    CHECK(psnr(a, a) == kInf);
    CHECK(std::abs(psnr(a, plus(a, 0.5), 2.0) - 20.0 * std::log10(4.0)) <= 1e-9);
    QT_CHECK_ERROR(psnr(a, Tensor({3, 8, 7})), ErrorCode::kShape);
  }

  TEST_CASE("psnr symmetry and shift invariance") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
      const Tensor a = rng.uniform_tensor({3, 6, 5}, 0.1, 0.6), b = rng.uniform_tensor({3, 6, 5}, 0.1, 0.6);
      CHECK(psnr(a, b) == psnr(b, a));
      CHECK(std::abs(psnr(plus(a, 0.3), plus(b, 0.3)) - psnr(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("ssim basics") {
    Rng rng(3);
    const Tensor a = rng.uniform_tensor({3, 20, 24}, 0.0, 1.0);
    CHECK(ssim(a, a) == 1.0);
    const Tensor g = rng.uniform_tensor({1, 16, 16}, -3.0, 3.0);
    CHECK(ssim(g, g) == 1.0);
    Tensor inv = a;
    for (double& v : inv.data()) v = 1.0 - v;
    CHECK(ssim(a, inv) < 1.0);
    QT_CHECK_ERROR(ssim(Tensor({3, 10, 20}), Tensor({3, 10, 20})), ErrorCode::kValidation);
  }

  TEST_CASE("ssim matches the windowed loop") {
    const TensorMap g = load_weights(qt::golden_path("ssim_pair.qmbw"));
    const double v = ssim(g.at("a"), g.at("b"));
    CHECK(std::abs(v - g.at("ssim")[0]) <= 1e-9);
    Rng rng(4);
    const Tensor a = rng.uniform_tensor({3, 17, 23}, 0.0, 1.0);
    Tensor b = a;
    for (double& x : b.data()) x = std::clamp(x + 0.2 * rng.normal(), 0.0, 1.0);
    CHECK(std::abs(ssim(a, b) - qt::ssim_loop(a, b)) <= 1e-12);
  }

  TEST_CASE("linear psnr") {
    Rng rng(5);
    const Tensor a = rng.uniform_tensor({3, 8, 8}, 0.2, 0.7);
    CHECK(linear_psnr(a, a) == kInf);
    const Tensor b = plus(a, 0.05);
    Tensor la = a, lb = b;
    for (double& v : la.data()) v = std::pow(v, 2.2);
    for (double& v : lb.data()) v = std::pow(v, 2.2);
    CHECK(std::abs(linear_psnr(a, b) - 10.0 * std::log10(1.0 / mse_loop(la, lb))) <= 1e-10);

    const Tensor pattern = rng.normal_tensor({3, 8, 8});
    double prev = -kInf;
    for (double k : {0.08, 0.04, 0.02, 0.01}) {
      Tensor c = a;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += k * pattern[i];
      const double v = linear_psnr(a, c);
      CHECK(v > prev);
      prev = v;
    }
  }

  TEST_CASE("report aggregation and serialization") {
    const EvalReport r = make_report({{"x", 30.0, 0.9, 29.5}, {"y", 20.5, 0.7, std::nullopt}, {"z", kInf, 1.0, kInf}});
    CHECK(r.aggregate.count == 3);
    CHECK(r.aggregate.mean_psnr == kInf);
    CHECK(std::abs(r.aggregate.mean_ssim - (0.9 + 0.7 + 1.0) / 3.0) <= 1e-12);
    const EvalReport f = make_report({{"x", 30.0, 0.9, {}}, {"y", 20.5, 0.7, {}}});
    CHECK(std::abs(f.aggregate.mean_psnr - 25.25) <= 1e-12);

    const std::string json = report_to_json(r);
    CHECK(json.find("\"inf\"") != std::string::npos);
    const std::string csv = report_to_csv(r);
    CHECK(csv.rfind("id,psnr_db,ssim,lpsnr_db\n", 0) == 0);
    CHECK(csv.find("z,inf,1,inf") != std::string::npos);
    CHECK(format_number(kInf) == "inf");
    CHECK(format_number(0.1) == "0.1");
    CHECK(make_report({}).aggregate.count == 0);
  }
}
